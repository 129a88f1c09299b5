# H and G operators, Perron roots, birth normalization
