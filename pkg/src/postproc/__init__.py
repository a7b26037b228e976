"""Display post-processing"""
