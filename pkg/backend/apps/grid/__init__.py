# Meshes, Laplacian and age quadrature
