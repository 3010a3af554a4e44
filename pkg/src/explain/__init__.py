"""
Exact TreeSHAP attribution, its brute-force oracle and the SHAP summaries.
"""
