"""Report rendering for pectl"""
