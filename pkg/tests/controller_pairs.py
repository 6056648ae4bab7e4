"""Regression pairs for the preserving controller: same zeros, different shapes."""

from signflow.synthesis import DatumPrescription, build_initial_datum

PAIRS = [
    # (start prescription, target prescription, start scale)
    (DatumPrescription((-0.3, 0.4), (-1, 1), (0, 0), 0.3), DatumPrescription((-0.3, 0.4), (-1, 1), (0, 0), 0.3), 2.0),
    (DatumPrescription((-0.3, 0.4), (-1, 1), (1, -1), 0.3), DatumPrescription((-0.3, 0.4), (-1, 1), (0, 0), 0.3), 1.0),
    (DatumPrescription((0.1,), (1,), (0,), 0.5, slope_scale=(2.0,)), DatumPrescription((0.1,), (1,), (0,), 0.5), 1.0),
    (
        DatumPrescription((-0.5, 0.0, 0.5), (1, -1, 1), (0, 0, 0), 0.4),
        DatumPrescription((-0.5, 0.0, 0.5), (1, -1, 1), (0, 0, 0), 0.4, slope_scale=(0.5, 1.0, 0.5)),
        1.0,
    ),
    (DatumPrescription((-0.2,), (-1,), (1,), 0.4), DatumPrescription((-0.2,), (-1,), (-1,), 0.4), 0.5),
]


def build_pair(index, a):
    start, target, scale = PAIRS[index]
    u = build_initial_datum(start, a, a.grid)
    return u.with_values(scale * u.values), build_initial_datum(target, a, a.grid)
