# Configuration module: process settings and run configs
