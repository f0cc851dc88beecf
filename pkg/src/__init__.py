"""
wforge: entanglement witnesses from support vector machines
"""
__version__ = "0.1.0"
