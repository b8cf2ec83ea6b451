"""Utility modules for pectl"""
