# Models module for tensors, configs and value objects
