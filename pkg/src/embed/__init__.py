"""
Exact t-SNE of raw-feature or SHAP rows and neighbourhood statistics of the result.
"""
