"""Record and catalog containers plus input validation.

A catalog stores one row per ground-motion record: event and station labels,
magnitude, rupture distance, site velocity, planar source and site
coordinates (km easting/northing), and the log intensity response. Event and
station ids are re-indexed to dense 0-based integers at construction; the
original labels are kept so round-trips are lossless.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# two labelled points closer than this (km) count as the same physical location
COORD_TOL = 1e-9


@dataclass(frozen=True)
class Record:
    """One ground-motion observation."""

    event_id: int
    station_id: int
    mag: float
    r_rup: float        # closest rupture distance, km, > 0
    vs30: float         # m/s, > 0
    t_E: tuple          # source coordinates (x, y) km
    t_S: tuple          # site coordinates (x, y) km
    y: float            # ln intensity


@dataclass(frozen=True)
class Scenario:
    """A prediction scenario: same inputs as a Record but no response."""

    mag: float
    r_rup: float
    vs30: float
    t_E: tuple
    t_S: tuple
    scenario_id: int = 0


class Catalog:
    """Validated, densely re-indexed collection of records.

    Parameters
    ----------
    records : sequence of Record
        Input records in their intended order. Use ``validate_catalog`` to
        construct with full validation; the constructor assumes clean input.

    Attributes
    ----------
    n_records, n_events, n_stations : int
    event_index, station_index : ndarray of int, shape (n_records,)
        Dense 0-based indices in order of first appearance.
    event_ids, station_ids : ndarray of int
        Original labels, indexed by the dense indices.
    mag, r_rup, vs30, y : ndarray of float, shape (n_records,)
    eq_xy, sta_xy : ndarray of float, shape (n_records, 2)
    event_xy : ndarray, shape (n_events, 2)
        Source coordinates per dense event index.
    station_xy : ndarray, shape (n_stations, 2)
    """

    def __init__(self, records):
        records = list(records)
        if not records:
            raise ValidationError("catalog is empty")
        self.records = records
        n = len(records)
        self.mag = np.array([r.mag for r in records], dtype=float)
        self.r_rup = np.array([r.r_rup for r in records], dtype=float)
        self.vs30 = np.array([r.vs30 for r in records], dtype=float)
        self.y = np.array([r.y for r in records], dtype=float)
        self.eq_xy = np.array([r.t_E for r in records], dtype=float).reshape(n, 2)
        self.sta_xy = np.array([r.t_S for r in records], dtype=float).reshape(n, 2)

        raw_eq = np.array([r.event_id for r in records])
        raw_st = np.array([r.station_id for r in records])
        self.event_ids, self.event_index = _dense_index(raw_eq)
        self.station_ids, self.station_index = _dense_index(raw_st)
        self.n_records = n
        self.n_events = len(self.event_ids)
        self.n_stations = len(self.station_ids)

        # representative coordinates per entity (first occurrence)
        first_eq = _first_rows(self.event_index, self.n_events)
        first_st = _first_rows(self.station_index, self.n_stations)
        self.event_xy = self.eq_xy[first_eq]
        self.station_xy = self.sta_xy[first_st]

    def __len__(self):
        return self.n_records

    def event_indicator(self):
        """Event membership matrix Z, shape (n_records, n_events), 0/1."""
        Z = np.zeros((self.n_records, self.n_events))
        Z[np.arange(self.n_records), self.event_index] = 1.0
        return Z

    def station_indicator(self):
        """Station membership matrix, shape (n_records, n_stations)."""
        Z = np.zeros((self.n_records, self.n_stations))
        Z[np.arange(self.n_records), self.station_index] = 1.0
        return Z


def _dense_index(raw):
    """Map raw labels to dense indices in order of first appearance."""
    seen = {}
    idx = np.empty(len(raw), dtype=int)
    for i, v in enumerate(raw):
        key = int(v)
        if key not in seen:
            seen[key] = len(seen)
        idx[i] = seen[key]
    labels = np.array(list(seen.keys()), dtype=int)
    return labels, idx


def _first_rows(index, n_groups):
    first = np.full(n_groups, -1, dtype=int)
    for row, g in enumerate(index):
        if first[g] < 0:
            first[g] = row
    return first


def validate_catalog(raw_records):
    """Validate records and build a Catalog.

    Checks: non-empty input, finite fields, r_rup > 0, vs30 > 0,
    label/coordinate consistency (an event id must map to one source
    location, a station id to one site location, within 1e-9 km), and one
    magnitude per event.

    Parameters
    ----------
    raw_records : sequence of Record

    Returns
    -------
    Catalog

    Raises
    ------
    ValidationError
        Naming the first offending record (0-based position) and field.
    """
    records = list(raw_records)
    if not records:
        raise ValidationError("catalog is empty")
    for i, r in enumerate(records):
        vals = (r.mag, r.r_rup, r.vs30, r.t_E[0], r.t_E[1], r.t_S[0], r.t_S[1], r.y)
        if not np.all(np.isfinite(vals)):
            raise ValidationError(f"record {i}: non-finite field")
        if not r.r_rup > 0:
            raise ValidationError(f"record {i}: r_rup must be > 0, got {r.r_rup}")
        if not r.vs30 > 0:
            raise ValidationError(f"record {i}: vs30 must be > 0, got {r.vs30}")

    _check_label_coords(records, "event_id", "t_E")
    _check_label_coords(records, "station_id", "t_S")

    mags = {}
    for i, r in enumerate(records):
        if r.event_id in mags and r.mag != mags[r.event_id]:
            raise ValidationError(
                f"record {i}: event_id {r.event_id} has conflicting "
                f"magnitudes {mags[r.event_id]} and {r.mag}"
            )
        mags.setdefault(r.event_id, r.mag)
    return Catalog(records)


def _check_label_coords(records, id_field, coord_field):
    seen = {}
    for i, r in enumerate(records):
        label = getattr(r, id_field)
        xy = np.asarray(getattr(r, coord_field), dtype=float)
        if label in seen:
            if np.linalg.norm(xy - seen[label]) > COORD_TOL:
                raise ValidationError(
                    f"record {i}: {id_field} {label} maps to conflicting "
                    f"{coord_field} coordinates"
                )
        else:
            seen[label] = xy


def scenarios_to_arrays(scenarios):
    """Stack a scenario list into a dict of column arrays."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValidationError("empty scenario list")
    n = len(scenarios)
    out = {
        "scenario_id": np.array([s.scenario_id for s in scenarios], dtype=int),
        "mag": np.array([s.mag for s in scenarios], dtype=float),
        "r_rup": np.array([s.r_rup for s in scenarios], dtype=float),
        "vs30": np.array([s.vs30 for s in scenarios], dtype=float),
        "eq_xy": np.array([s.t_E for s in scenarios], dtype=float).reshape(n, 2),
        "sta_xy": np.array([s.t_S for s in scenarios], dtype=float).reshape(n, 2),
    }
    for key in ("mag", "r_rup", "vs30"):
        if not np.all(np.isfinite(out[key])):
            raise ValidationError(f"scenario field {key} has non-finite values")
    return out
