"""
Structured logging setup for agebif.

structlog renders JSON event lines and hands them to the stdlib logging
tree configured in settings.LOGGING (colorlog console handler).
"""
import structlog


def add_service_info(logger, method_name, event_dict):
    """Add service information to all log events"""
    event_dict['service'] = 'agebif'
    event_dict.setdefault('component', logger.name.split('.')[1] if logger and '.' in logger.name else 'core')
    return event_dict


def configure_structlog():
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            add_service_info,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
