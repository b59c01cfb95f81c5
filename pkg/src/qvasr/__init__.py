"""Loop summarization via rational vector-addition-system abstractions."""

__version__ = "0.1.0"
