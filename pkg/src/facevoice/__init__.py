"""Face-voice association with maximally separated speaker prototypes."""

__version__ = "0.1.0"
