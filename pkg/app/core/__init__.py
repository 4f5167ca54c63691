"""
Core package initialization.
"""
