"""Numerical core: grids, kernels, the plant, control laws and stability analysis"""
