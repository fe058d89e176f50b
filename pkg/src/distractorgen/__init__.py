"""Distractor generation for multiple-choice reading comprehension."""

__version__ = "0.1.0"
