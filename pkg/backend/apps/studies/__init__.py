# Run configuration, study services, management commands
