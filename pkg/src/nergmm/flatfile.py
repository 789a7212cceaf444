"""Tabular file formats: flatfile, truth sidecar, scenarios, predictions.

All files are UTF-8 CSV with LF newlines and exact headers. Floats are
written with shortest round-trip formatting (Python repr), so a write/read
cycle reproduces every value bit-exactly and repeated runs with identical
inputs produce byte-identical files.
"""

import csv

import numpy as np

from .catalog import Record, Scenario, validate_catalog
from .errors import ValidationError

FLATFILE_HEADER = ["eqid", "ssn", "mag", "rrup", "vs30", "eqx", "eqy",
                   "stax", "stay", "y"]
TRUTH_EXTRA = ["f_erg", "dL2L", "dP2P", "dS2S", "dB0", "dWS0"]
SCENARIO_HEADER = ["scenario_id", "mag", "rrup", "vs30", "eqx", "eqy",
                   "stax", "stay"]
PREDICTION_HEADER = ["scenario_id", "median_lnY", "sd_epistemic", "dL2L",
                     "dP2P", "dS2S", "tau0", "phi0"]


def _fmt(x):
    """Shortest round-trip decimal form of a float."""
    return repr(float(x))


def _check_header(row, expected, path):
    if row != expected:
        raise ValidationError(
            f"{path}: bad header {','.join(row)!r}; expected "
            f"{','.join(expected)!r}")


def _parse_float(text, path, row_num, col):
    try:
        val = float(text)
    except ValueError as exc:
        raise ValidationError(
            f"{path}: row {row_num}: column {col!r}: not a number: "
            f"{text!r}") from exc
    if not np.isfinite(val):
        raise ValidationError(
            f"{path}: row {row_num}: column {col!r}: non-finite value")
    return val


def _parse_int(text, path, row_num, col):
    try:
        return int(text)
    except ValueError as exc:
        raise ValidationError(
            f"{path}: row {row_num}: column {col!r}: not an integer: "
            f"{text!r}") from exc


def read_flatfile(path):
    """Read a flatfile into a validated Catalog.

    Raises
    ------
    ValidationError
        Wrong header, non-numeric or non-finite cell (with 1-based data row
        number), or an empty file.
    """
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        _check_header(header, FLATFILE_HEADER, path)
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(FLATFILE_HEADER):
                raise ValidationError(
                    f"{path}: row {row_num}: expected "
                    f"{len(FLATFILE_HEADER)} columns, got {len(row)}")
            vals = {}
            for col, cell in zip(FLATFILE_HEADER, row):
                if col in ("eqid", "ssn"):
                    vals[col] = _parse_int(cell, path, row_num, col)
                else:
                    vals[col] = _parse_float(cell, path, row_num, col)
            records.append(Record(
                event_id=vals["eqid"], station_id=vals["ssn"],
                mag=vals["mag"], r_rup=vals["rrup"], vs30=vals["vs30"],
                t_E=(vals["eqx"], vals["eqy"]),
                t_S=(vals["stax"], vals["stay"]), y=vals["y"]))
    if not records:
        raise ValidationError(f"{path}: no data rows")
    return validate_catalog(records)


def write_flatfile(catalog, path):
    """Write a catalog as a flatfile."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(FLATFILE_HEADER) + "\n")
        for i in range(catalog.n_records):
            row = [str(int(catalog.event_ids[catalog.event_index[i]])),
                   str(int(catalog.station_ids[catalog.station_index[i]])),
                   _fmt(catalog.mag[i]), _fmt(catalog.r_rup[i]),
                   _fmt(catalog.vs30[i]),
                   _fmt(catalog.eq_xy[i, 0]), _fmt(catalog.eq_xy[i, 1]),
                   _fmt(catalog.sta_xy[i, 0]), _fmt(catalog.sta_xy[i, 1]),
                   _fmt(catalog.y[i])]
            fh.write(",".join(row) + "\n")


def write_truth(catalog, truth, path):
    """Write the truth sidecar: the flatfile schema plus latent columns."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(FLATFILE_HEADER + TRUTH_EXTRA) + "\n")
        dB0_rec = truth.dB0[catalog.event_index]
        for i in range(catalog.n_records):
            row = [str(int(catalog.event_ids[catalog.event_index[i]])),
                   str(int(catalog.station_ids[catalog.station_index[i]])),
                   _fmt(catalog.mag[i]), _fmt(catalog.r_rup[i]),
                   _fmt(catalog.vs30[i]),
                   _fmt(catalog.eq_xy[i, 0]), _fmt(catalog.eq_xy[i, 1]),
                   _fmt(catalog.sta_xy[i, 0]), _fmt(catalog.sta_xy[i, 1]),
                   _fmt(catalog.y[i]),
                   _fmt(truth.f_erg_vals[i]), _fmt(truth.dL2L[i]),
                   _fmt(truth.dP2P[i]), _fmt(truth.dS2S[i]),
                   _fmt(dB0_rec[i]), _fmt(truth.dWS0[i])]
            fh.write(",".join(row) + "\n")


def read_scenarios(path):
    """Read a scenario CSV into a list of Scenario."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        _check_header(header, SCENARIO_HEADER, path)
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(SCENARIO_HEADER):
                raise ValidationError(
                    f"{path}: row {row_num}: expected "
                    f"{len(SCENARIO_HEADER)} columns, got {len(row)}")
            sid = _parse_int(row[0], path, row_num, "scenario_id")
            vals = [_parse_float(c, path, row_num, col)
                    for col, c in zip(SCENARIO_HEADER[1:], row[1:])]
            out.append(Scenario(scenario_id=sid, mag=vals[0], r_rup=vals[1],
                                vs30=vals[2], t_E=(vals[3], vals[4]),
                                t_S=(vals[5], vals[6])))
    if not out:
        raise ValidationError(f"{path}: no scenario rows")
    return out


def write_scenarios(scenarios, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SCENARIO_HEADER) + "\n")
        for s in scenarios:
            row = [str(int(s.scenario_id)), _fmt(s.mag), _fmt(s.r_rup),
                   _fmt(s.vs30), _fmt(s.t_E[0]), _fmt(s.t_E[1]),
                   _fmt(s.t_S[0]), _fmt(s.t_S[1])]
            fh.write(",".join(row) + "\n")


def write_predictions(pred, path):
    """Write a GmPrediction as the prediction CSV."""
    sd = pred.sd_epistemic
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(PREDICTION_HEADER) + "\n")
        for j in range(pred.median.size):
            row = [str(int(pred.scenario_ids[j])), _fmt(pred.median[j]),
                   _fmt(sd[j]), _fmt(pred.dL2L[j]), _fmt(pred.dP2P[j]),
                   _fmt(pred.dS2S[j]), _fmt(pred.tau0), _fmt(pred.phi0)]
            fh.write(",".join(row) + "\n")


def write_matrix(mat, path):
    """Write a dense matrix as headerless CSV (row per line)."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in mat:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_draws(draws, scenario_ids, path):
    """Write sampled realizations: one row per draw, one column per
    scenario (headed by scenario id)."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ",".join(f"s{int(i)}" for i in scenario_ids)
        fh.write("draw_id," + cols + "\n")
        for d, row in enumerate(draws):
            fh.write(str(d) + "," + ",".join(_fmt(v) for v in row) + "\n")


def write_dR(dR, path):
    """Export nonzero cell-path segments: record_index, cell_index,
    length_km."""
    dR = np.asarray(dR, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("record_index,cell_index,length_km\n")
        for r in range(dR.shape[0]):
            for c in np.flatnonzero(dR[r]):
                fh.write(f"{r},{c}," + _fmt(dR[r, c]) + "\n")
