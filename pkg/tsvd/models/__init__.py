"""
Pydantic types: ternary factors, convolution geometry, costs, training state and study settings.
"""
