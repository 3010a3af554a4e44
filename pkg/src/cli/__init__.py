"""
Command line front end, stage functions and the pipeline runner.
"""
