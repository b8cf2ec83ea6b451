"""Scenario actions for pectl"""
