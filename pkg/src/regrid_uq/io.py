"""File formats: grid and field CSVs, key/value configs, fitted models, results.

Floats are written with ``repr`` (shortest round-trip decimal), so reading
an emitted CSV and writing it again reproduces it byte for byte.
"""
import configparser
import csv
import datetime as dt
import os
import re
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InvalidArgument
from .fields import Datasets, Field
from .gp import CovParams
from .grid import Grid
from .pipeline import CovariateModel, MonthModel, StudyConfig
from .synth import CovariateTruth, TruthConfig
from .transform import TransformSpec

GRID_HEADER = ("id", "x_km", "y_km")
FIELD_HEADER = ("date", "location_id", "value")
RESULTS_HEADER = ("location_id", "month", "coef_name", "naive_est", "naive_lo", "naive_hi",
                  "bayes_median", "bayes_lo", "bayes_hi", "bias")
SUMMARY_HEADER = ("location_id", "month", "path", "mean_coverage", "mean_rmse")
FOLD_HEADER = ("location_id", "month", "path", "test_year", "coverage", "rmse")
BIAS_HEADER = ("location_id", "month", "coef_name", "bias")


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    return str(v)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def read_csv(path, header):
    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise FileNotFoundError(f"file not found: {path}") from None
    with fh:
        rd = csv.reader(fh)
        head = next(rd, None)
        if head is None or tuple(h.strip() for h in head[: len(header)]) != tuple(header):
            raise ConfigError(f"{path}: expected header {','.join(header)}, got {','.join(head or [])}")
        return [r for r in rd if r]


# -- grids and fields


def write_grid(path, grid):
    write_csv(path, GRID_HEADER, ((i, x, y) for i, (x, y) in zip(grid.ids, grid.points)))


def read_grid(path, id=None):
    rows = read_csv(path, GRID_HEADER)
    try:
        pts = [(float(r[1]), float(r[2])) for r in rows]
    except (ValueError, IndexError) as e:
        raise ConfigError(f"{path}: bad grid row ({e})") from None
    gid = id or os.path.splitext(os.path.basename(path))[0]
    return Grid(np.array(pts).reshape(-1, 2), id=gid, ids=tuple(r[0] for r in rows))


def write_field(path, f, date_format="%Y-%m-%d"):
    def rows():
        for d, vals in zip(f.dates, f.values):
            ds = d.astype(dt.date).strftime(date_format)
            for lid, v in zip(f.grid.ids, vals):
                yield ds, lid, v

    write_csv(path, FIELD_HEADER, rows())


def read_field(path, grid, name, date_format="%Y-%m-%d"):
    """Read a long-format field CSV; every (date, location) must appear exactly once."""
    rows = read_csv(path, FIELD_HEADER)
    col = {lid: j for j, lid in enumerate(grid.ids)}
    by_date = {}
    for ln, r in enumerate(rows, start=2):
        try:
            d = dt.datetime.strptime(r[0], date_format).date()
            v = float(r[2])
        except (ValueError, IndexError) as e:
            raise ConfigError(f"{path}:{ln}: cannot parse row ({e})") from None
        if r[1] not in col:
            raise ConfigError(f"{path}:{ln}: unknown location id {r[1]!r} for grid {grid.id!r}")
        vals = by_date.setdefault(d, np.full(len(grid), np.nan))
        j = col[r[1]]
        if not np.isnan(vals[j]):
            raise ConfigError(f"{path}:{ln}: duplicate value for {r[0]}, {r[1]}")
        vals[j] = v
    dates = sorted(by_date)
    values = np.array([by_date[d] for d in dates]).reshape(len(dates), len(grid))
    missing = np.argwhere(np.isnan(values))
    if len(missing):
        d, j = missing[0]
        raise ConfigError(f"{path}: missing value for {dates[d]} at location {grid.ids[j]} "
                          f"({len(missing)} missing in total)")
    return Field(name, grid, np.array(dates, dtype="datetime64[D]"), values)


# -- key = value configuration files


def _parser():
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str
    return p


def _line_of(text, section, key):
    cur = None
    for ln, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return ln
    return 0


@dataclass
class ConfigFile:
    path: str
    text: str
    parser: configparser.ConfigParser

    def error(self, section, key, msg):
        return ConfigError(f"{self.path}:{_line_of(self.text, section, key)}: [{section}] {key}: {msg}")

    def sections(self, prefix=None):
        return [s for s in self.parser.sections() if prefix is None or s.split()[0] == prefix]

    def items(self, section):
        return list(self.parser.items(section)) if self.parser.has_section(section) else []


def read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"file not found: {path}") from None
    p = _parser()
    try:
        p.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    return ConfigFile(path, text, p)


def _to_bool(s):
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_list(conv):
    def f(s):
        s = s.strip()
        return () if not s else tuple(conv(v) for v in re.split(r"[,\s]+", s) if v)
    return f


def _to_years(s):
    out = []
    for tok in re.split(r"[,\s]+", s.strip()):
        if not tok:
            continue
        if "-" in tok:
            a, b = tok.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def _optional_years(s):
    return None if s.strip().lower() in ("", "all", "none") else _to_years(s)


_STUDY_KEYS = {
    "months": _to_list(int), "years": _optional_years, "n_cond_sims": int, "n_post_per_sim": int,
    "ci_level": float, "drop_pvalue": float, "response_scale": str.strip, "sigma2_mode": str.strip,
    "arma_family": str.strip, "master_seed": int, "seasonal": _to_bool, "covariate_transform": _to_bool,
    "nu_quantile": float, "threads": int,
}


def _convert(cf, section, key, value, conv):
    try:
        return conv(value)
    except (ValueError, TypeError) as e:
        raise cf.error(section, key, f"bad value {value!r} ({e})") from None


def study_config_from_file(path, **overrides):
    """``StudyConfig`` from the ``[study]`` section of a config file (None gives defaults)."""
    kw = {}
    if path is not None:
        cf = read_config(path)
        unknown = [s for s in cf.sections() if s != "study"]
        if unknown:
            raise ConfigError(f"{path}:{_line_of(cf.text, unknown[0], '') or 0}: unexpected section [{unknown[0]}]")
        for k, v in cf.items("study"):
            if k not in _STUDY_KEYS:
                raise cf.error("study", k, "unknown key")
            kw[k] = _convert(cf, "study", k, v, _STUDY_KEYS[k])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(**kw)


def write_study_config(path, cfg):
    lines = ["[study]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {'all' if v is None else fmt(v)}")
    _write_text(path, "\n".join(lines) + "\n")


_TARGET_KEYS = {"origin_x": float, "origin_y": float, "spacing": float, "nx": int, "ny": int}
_TRUTH_KEYS = {"beta": _to_list(float), "gamma": _to_list(float), "noise_sd": float, "days_per_month": int,
               "months": _to_list(int), "years": _to_years, "master_seed": int, "transform": _to_bool}
_COV_KEYS = {"spacing": float, "nx": int, "ny": int, "rotation": float, "offset_x": float, "offset_y": float,
             "rho": float, "theta_km": float, "mu": float}


def truth_config_from_file(path, seed=None):
    """``TruthConfig`` from ``[target]``, ``[truth]`` and ``[covariate NAME]`` sections."""
    kw = {}
    if path is not None:
        cf = read_config(path)
        for s in cf.sections():
            if s not in ("target", "truth") and s.split()[0] != "covariate":
                raise ConfigError(f"{path}: unexpected section [{s}]")
        tgt = {}
        for k, v in cf.items("target"):
            if k not in _TARGET_KEYS:
                raise cf.error("target", k, "unknown key")
            tgt[k] = _convert(cf, "target", k, v, _TARGET_KEYS[k])
        if "origin_x" in tgt or "origin_y" in tgt:
            kw["target_origin"] = (tgt.pop("origin_x", 0.0), tgt.pop("origin_y", 0.0))
        kw.update({f"target_{k}": v for k, v in tgt.items()})
        for k, v in cf.items("truth"):
            if k not in _TRUTH_KEYS:
                raise cf.error("truth", k, "unknown key")
            kw[k] = _convert(cf, "truth", k, v, _TRUTH_KEYS[k])
        covs = []
        for s in cf.sections("covariate"):
            parts = s.split()
            if len(parts) != 2:
                raise ConfigError(f"{path}: covariate section needs a name: [{s}]")
            ck = {}
            for k, v in cf.items(s):
                if k not in _COV_KEYS:
                    raise cf.error(s, k, "unknown key")
                ck[k] = _convert(cf, s, k, v, _COV_KEYS[k])
            off = (ck.pop("offset_x", 0.0), ck.pop("offset_y", 0.0))
            if "theta_km" in ck:
                ck["theta"] = ck.pop("theta_km")
            covs.append(CovariateTruth(parts[1], offset=off, **ck))
        if covs:
            kw["covariates"] = tuple(covs)
    if seed is not None:
        kw["master_seed"] = seed
    return TruthConfig(**kw)


# -- dataset manifests


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    response_field: str
    response_grid: str
    covariates: tuple
    date_format: str = "%Y-%m-%d"
    units: str = ""

    def load(self):
        """Read and validate every referenced file."""
        tgrid = read_grid(self.response_grid, id="target")
        resp = read_field(self.response_field, tgrid, "response", self.date_format)
        covs = []
        for name, fpath, gpath in self.covariates:
            g = read_grid(gpath, id=name)
            covs.append(read_field(fpath, g, name, self.date_format))
        return Datasets(resp, tuple(covs))


def read_manifest(path):
    cf = read_config(path)
    base = os.path.dirname(os.path.abspath(path))

    def req(section, key):
        if not cf.parser.has_option(section, key):
            raise ConfigError(f"{path}: [{section}] is missing {key!r}")
        v = cf.parser.get(section, key).strip()
        return v if os.path.isabs(v) else os.path.join(base, v)

    if not cf.parser.has_section("response"):
        raise ConfigError(f"{path}: missing [response] section")
    covs = []
    for s in cf.sections("covariate"):
        parts = s.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}: covariate section needs a name: [{s}]")
        covs.append((parts[1], req(s, "field"), req(s, "grid")))
    if not covs:
        raise ConfigError(f"{path}: no [covariate NAME] sections")
    meta = dict(cf.items("meta"))
    m = DatasetManifest(path, req("response", "field"), req("response", "grid"), tuple(covs),
                        meta.get("date_format", "%Y-%m-%d"), meta.get("units", ""))
    for f in [m.response_field, m.response_grid] + [p for c in covs for p in c[1:]]:
        if not os.path.exists(f):
            raise FileNotFoundError(f"file referenced by {path} not found: {f}")
    return m


def write_manifest(path, response_field, response_grid, covariates, units="W m-2"):
    lines = ["[response]", f"field = {response_field}", f"grid = {response_grid}", ""]
    for name, fpath, gpath in covariates:
        lines += [f"[covariate {name}]", f"field = {fpath}", f"grid = {gpath}", ""]
    lines += ["[meta]", "date_format = %Y-%m-%d", f"units = {units}"]
    _write_text(path, "\n".join(lines) + "\n")


# -- fitted model files


def write_model(path, models, cfg):
    lines = ["# fitted regridding model", "[model]",
             f"response_scale = {cfg.response_scale}",
             f"covariate_transform = {fmt(cfg.covariate_transform)}",
             f"nu_quantile = {fmt(cfg.nu_quantile)}",
             f"months = {', '.join(str(m) for m in sorted(models))}", ""]
    for month in sorted(models):
        mm = models[month]
        rt = mm.response_transform
        lines += [f"[month {month}]", f"response_nu = {'none' if rt is None else fmt(rt.nu)}",
                  f"retained = {', '.join(mm.retained)}", ""]
        for c in mm.covariates:
            lines += [f"[month {month} covariate {c.name}]",
                      f"nu = {'none' if c.transform is None else fmt(c.transform.nu)}",
                      f"params = {c.params.to_text()}",
                      f"retained = {fmt(c.retained)}", ""]
    _write_text(path, "\n".join(lines))


def _nu(cf, s, v):
    return None if v.strip() == "none" else TransformSpec(_convert(cf, s, "nu", v, float))


def read_model(path):
    """Return ``(models, settings)`` from a fitted-model file."""
    cf = read_config(path)
    if not cf.parser.has_section("model"):
        raise ConfigError(f"{path}: missing [model] section")
    settings = dict(cf.items("model"))
    models = {}
    for s in cf.sections("month"):
        parts = s.split()
        if len(parts) == 2:
            month = _convert(cf, s, "month", parts[1], int)
            sec = dict(cf.items(s))
            covs = []
            for cs in cf.sections("month"):
                cp = cs.split()
                if len(cp) == 4 and cp[1] == parts[1] and cp[2] == "covariate":
                    c = dict(cf.items(cs))
                    try:
                        params = CovParams.from_text(c["params"])
                        keep = _to_bool(c["retained"])
                    except (KeyError, ValueError, InvalidArgument) as e:
                        raise cf.error(cs, "params", str(e)) from None
                    covs.append(CovariateModel(cp[3], _nu(cf, cs, c.get("nu", "none")), params, keep))
            if not covs:
                raise ConfigError(f"{path}: month {month} has no covariate sections")
            models[month] = MonthModel(month, _nu(cf, s, sec.get("response_nu", "none")), tuple(covs))
    if not models:
        raise ConfigError(f"{path}: no [month N] sections")
    return models, settings


def check_model_matches(models, settings, cfg, data):
    """Fail fast if a model file cannot serve this config and dataset."""
    want = {"response_scale": cfg.response_scale, "covariate_transform": fmt(cfg.covariate_transform)}
    for k, v in want.items():
        if settings.get(k, v) != v:
            raise ConfigError(f"model was fitted with {k} = {settings.get(k)}, config has {v}")
    missing = [m for m in cfg.months if m not in models]
    if missing:
        raise ConfigError(f"model has no fit for month(s) {missing}")
    names = set(data.covariate_names)
    for m in cfg.months:
        have = {c.name for c in models[m].covariates}
        if have != names:
            raise ConfigError(f"model covariates {sorted(have)} for month {m} do not match manifest {sorted(names)}")


# -- results


def result_rows(results):
    for r in results:
        yield from r.rows()


def write_results(path, results):
    write_csv(path, RESULTS_HEADER, result_rows(results))


def write_draws(path, results):
    """Pooled posterior draws, one row per draw.

    ``betaJ`` is the J-th regression coefficient of that month's model, in
    the order of the results table (intercept first).
    """
    width = max(len(r.names) for r in results if r.bayes is not None)
    header = ("location_id", "month", "cond_sim_index", "post_draw_index") + tuple(
        f"beta{j}" for j in range(width)) + ("sigma2", "eta")

    def rows():
        for r in results:
            if r.bayes is None:
                continue
            d = r.bayes.draws
            P = r.bayes.n_post_per_sim
            pad = [None] * (width - d.coef.shape[1])
            for i in range(len(d)):
                eta = None if d.eta is None else d.eta[i]
                yield (r.location_id, r.month, i // P, i % P, *d.coef[i], *pad, d.sigma2[i], eta)

    write_csv(path, header, rows())


def write_kv(path, items):
    _write_text(path, "".join(f"{k} = {_kv_value(v)}\n" for k, v in items.items()))


def _kv_value(v):
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return "all" if v is None else fmt(v)


def read_kv(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


def _write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
