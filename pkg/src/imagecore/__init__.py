"""Image and frame-stack types, phantom, envelope detection and file I/O"""
