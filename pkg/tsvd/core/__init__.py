"""
Settings and exceptions.
"""
