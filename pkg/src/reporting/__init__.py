"""Report writers for estimates, coverage studies and importance runs"""

from .writer import ReportWriter, failure_payload

__all__ = ['ReportWriter', 'failure_payload']
