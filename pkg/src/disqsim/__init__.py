"""
disqsim - distributed quantum circuit compiler and noisy simulator
"""

__version__ = "0.1.0"
