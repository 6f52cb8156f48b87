"""Child-process model server for the context-evaluator wire protocol."""

__version__ = "0.1.0"
