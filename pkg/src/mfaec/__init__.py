"""Multimodal speech emotion recognition with ASR error detection/correction
auxiliary tasks and cross-modal fusion, on a hand-built numpy autodiff engine."""

__version__ = "0.1.0"
