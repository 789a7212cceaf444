"""Shared builders for small hand-made catalogs."""

import numpy as np
import pytest

from nergmm.catalog import Record, validate_catalog


def make_record(event_id=0, station_id=0, mag=5.0, r_rup=30.0, vs30=400.0,
                t_E=(0.0, 0.0), t_S=(30.0, 0.0), y=-3.0):
    return Record(event_id=event_id, station_id=station_id, mag=mag,
                  r_rup=r_rup, vs30=vs30, t_E=t_E, t_S=t_S, y=y)


def random_catalog(rng, n_events=8, n_stations=6, records_per_event=(2, 5),
                   region=(0.0, 100.0, 0.0, 100.0), y=None):
    """Small catalog with random geometry; y defaults to standard normal.

    r_rup is the planar source-station distance so cell-path sums match it
    exactly.
    """
    x0, x1, y0, y1 = region
    sta = np.column_stack([rng.uniform(x0, x1, n_stations),
                           rng.uniform(y0, y1, n_stations)])
    eq = np.column_stack([rng.uniform(x0, x1, n_events),
                          rng.uniform(y0, y1, n_events)])
    vs30 = rng.uniform(200.0, 900.0, n_stations)
    mag = rng.uniform(4.0, 7.0, n_events)
    records = []
    for e in range(n_events):
        k = rng.integers(records_per_event[0], records_per_event[1] + 1)
        for s in rng.choice(n_stations, size=min(k, n_stations),
                            replace=False):
            r = float(np.hypot(*(eq[e] - sta[s])))
            if r < 1e-3:
                continue
            records.append(Record(
                event_id=int(e), station_id=int(s), mag=float(mag[e]),
                r_rup=r, vs30=float(vs30[s]), t_E=tuple(eq[e]),
                t_S=tuple(sta[s]),
                y=float(rng.normal()) if y is None else float(y)))
    return validate_catalog(records)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
