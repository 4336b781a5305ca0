"""dialoforge: a desk-scale workbench for goal-oriented dialogue systems."""

__version__ = "0.1.0"
