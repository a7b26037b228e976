"""B-mode restoration: deconvolution, multiframe speckle estimation and despeckling"""
