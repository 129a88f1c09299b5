# Shared errors, logging, metrics and service responses
