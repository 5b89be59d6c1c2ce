# Commands module: one class per command-line command
