"""
Application modules.
"""
