"""brakekit: variational brake-orbit toolkit for magnetic Tonelli systems on flat tori."""

__version__ = "0.1.0"
