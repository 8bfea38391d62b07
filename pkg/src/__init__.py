# GBDT toolkit - Darboux transformations of discrete skew-selfadjoint Dirac systems
