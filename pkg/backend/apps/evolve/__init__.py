# Backward Euler propagators in age
