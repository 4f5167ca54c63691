"""
GUIDED fine-grained open-vocabulary detection toolkit.
"""
