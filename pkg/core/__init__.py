# Core module: tensor engine, interfaces and base classes
