# Pseudo-arclength continuation of coexistence states
