"""
Services: ternary kernels, decomposition, convolution lowering, cost model, training and studies.
"""
