# Utils module for file handlers and console output
