import numpy as np

from dflim import simulate


def fast_scenario(
    shift="none",
    length=100,
    seed=5,
    p1=40,
    p2=80,
    dist="normal",
    row_kind="tri_diagonal",
    col_kind="tri_diagonal",
    lag=5,
    phi=0.5,
    background="chessboard2",
):
    """Small-frame scenario used across the test suite."""
    return simulate.ScenarioConfig(
        p1=p1,
        p2=p2,
        background=background,
        shift=shift,
        noise=simulate.NoiseSpec(
            dist=dist,
            row_cov=simulate.CovSpec(kind=row_kind, dim=p1),
            col_cov=simulate.CovSpec(kind=col_kind, dim=p2),
        ),
        temporal=simulate.TemporalSpec(lag=lag, phi=phi),
        length=length,
        seed=seed,
    )
