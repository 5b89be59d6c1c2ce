# Services module: blocks, backbone, data, training and evaluation logic
