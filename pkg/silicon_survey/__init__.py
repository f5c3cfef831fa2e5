"""
Simulation of Likert survey responses with interview-informed LLM prompts, and alignment metrics against the observed
human responses.
"""

__version__ = '0.1'
