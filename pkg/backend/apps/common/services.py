"""
Service layer primitives shared by the study services.
"""
from typing import Any, Dict, List, Optional

from .exceptions import AgebifError


class ServiceResponse:
    """Standardized result of a study service"""

    def __init__(self, success: bool = True, data: Any = None,
                 error: str = None, warnings: List[str] = None,
                 exit_code: int = 0, diagnostics: Optional[Dict[str, Any]] = None):
        self.success = success
        self.data = data or {}
        self.error = error
        self.warnings = warnings or []
        self.exit_code = exit_code
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> Dict[str, Any]:
        """Conversion to a JSON-ready dict"""
        return {
            'success': self.success,
            'data': self.data,
            'error': self.error,
            'warnings': self.warnings,
            'diagnostics': self.diagnostics,
        }

    @classmethod
    def success_response(cls, data: Any = None, warnings: List[str] = None):
        return cls(success=True, data=data, warnings=warnings)

    @classmethod
    def error_response(cls, error: str, data: Any = None, exit_code: int = 3,
                       diagnostics: Optional[Dict[str, Any]] = None):
        return cls(success=False, error=error, data=data, exit_code=exit_code,
                   diagnostics=diagnostics)

    @classmethod
    def from_exception(cls, exc: AgebifError, data: Any = None):
        """Error response carrying the exception's exit code and diagnostics"""
        return cls.error_response(
            f"{exc.__class__.__name__}: {exc.message}",
            data=data,
            exit_code=exc.exit_code,
            diagnostics=exc.diagnostics,
        )
