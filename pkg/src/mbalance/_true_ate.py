"""Monte Carlo oracle values of the population ATE. Generated by
scripts/regen_true_ate.py; do not edit by hand."""

ORACLE_SEED = 20240521
ORACLE_DRAWS = 10000000
ORACLE = {
    "B": 22.50814725694216,
    "M1": 3.0004978911136417,
    "M2": 2.500140696092039,
    "M1_printed": 5.997057128092816,
}
ORACLE_SE = {
    "B": 0.005791537307370355,
    "M1": 0.000898629224300439,
    "M2": 0.0003395136882076673,
    "M1_printed": 0.002190410445727811,
}
