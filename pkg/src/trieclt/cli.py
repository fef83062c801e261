"""Command-line front door: sampling, analytics, verification, tables, export.

Exit codes are a stable contract: 0 success/pass, 1 execution error,
2 statistical failure.
"""

from __future__ import annotations

import json
import sys
from importlib import resources

import click

from . import analytics, figures, montecarlo
from .errors import TrieCltError
from .model import ProbModel
from .source import StringSource
from .tolls import parse_toll
from .trie import sample_fixed, sample_poisson

_SHIPPED = ("sym2", "p37", "quarter", "sym4")


def load_model(spec: str) -> ProbModel:
    """Resolve a shipped model name (sym2, p37, quarter, sym4) or a path."""
    if spec in _SHIPPED:
        text = resources.files("trieclt").joinpath(f"data/{spec}.json").read_text()
        return ProbModel.from_dict(json.loads(text))
    return ProbModel.from_json(spec)


def _fail(exc: Exception):
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
    sys.exit(1)


def _common(fn):
    fn = click.option("--model", "model_spec", default=None,
                      help="model name (sym2|p37|quarter|sym4) or JSON path")(fn)
    fn = click.option("--seed", type=int, default=1, show_default=True)(fn)
    fn = click.option("--threads", type=int, default=1, show_default=True,
                      envvar="TRIECLT_THREADS")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                      default="json", show_default=True)(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="output path (stdout when omitted)")(fn)
    return fn


def _write(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


@click.group()
@click.version_option(package_name="trieclt")
def main():
    """Random tries: sampling, asymptotic constants, and CLT verification."""


@main.command()
@_common
@click.option("--n", type=int, default=None, help="fixed number of strings")
@click.option("--poisson", "lam", type=float, default=None,
              help="Poisson intensity lambda")
def sample(model_spec, seed, threads, fmt, out, n, lam):
    """Sample a random trie and serialize it as JSON."""
    try:
        if (n is None) == (lam is None):
            raise ValueError("give exactly one of --n or --poisson")
        model = load_model(model_spec or "sym2")
        src = StringSource(model, seed)
        trie = sample_fixed(n, src) if lam is None else sample_poisson(lam, src)
        summary = (f"nodes={len(trie)} internal={trie.internal_count} "
                   f"external={trie.external_count}")
        if trie.poisson_lambda is not None:
            summary += f" N={trie.external_count}"
        click.echo(summary, err=True)
        _write(trie.to_json(), out)
    except (TrieCltError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@_common
@click.option("--toll", "toll_spec", default=None, help='toll spec, e.g. "size"')
@click.option("--quantity", required=True,
              help="entropy|rho|span|fE|fC|fV|mfe|mfc|mfv|psi-e|psi-v|psi-c|"
                   "asym-mean|asym-var-poisson|asym-var-fixed|fringe-dist|"
                   "fringe-fluct|protected|protected-asym|bucket|fsum")
@click.option("--s", "s_str", default=None, help="complex argument, e.g. -1 or -1-9j")
@click.option("--lam", type=float, default=None)
@click.option("--n", type=float, default=None)
@click.option("--x", type=float, default=None)
@click.option("--t", type=float, default=None)
@click.option("--k", type=int, default=None)
@click.option("--b", type=int, default=None)
@click.option("--r", type=int, default=None)
@click.option("--mode", type=click.Choice(["poisson", "fixed"]), default="poisson")
def analytic(model_spec, seed, threads, fmt, out, toll_spec, quantity, s_str,
             lam, n, x, t, k, b, r, mode):
    """Evaluate an analytic quantity; prints an AnalyticReport as JSON."""
    try:
        model = load_model(model_spec) if model_spec else None
        toll = parse_toll(toll_spec) if toll_spec else None
        s = complex(s_str.replace(" ", "")) if s_str is not None else None
        if s is not None and s.imag == 0.0:
            s = s.real
        q = quantity.lower()
        if q == "protected" and k is None and toll is not None \
                and toll.kind == "kprot":
            k = toll.k
        if x is None:
            x = n if n is not None else lam
        rep = analytics.report(q, toll=toll, model=model, s=s, lam=lam,
                               n=n, x=x, t=t, k=k, b=b, r=r, mode=mode)
        _write(json.dumps(rep.to_dict(), indent=2), out)
    except (TrieCltError, ValueError, KeyError, OSError) as exc:
        _fail(exc)


def _spec_from_flags(model, tolls, n, lam, trials, seed, threads, label=""):
    mode = "fixed" if lam is None else "poisson"
    size = float(n) if lam is None else float(lam)
    return montecarlo.ExperimentSpec(model, mode, size, tolls, trials, seed,
                                     threads=threads, label=label)


def _emit_report(report, fmt, out, figures_dir, prefix):
    if figures_dir:
        paths = figures.render_report_figures(report, figures_dir, prefix=prefix)
        for p in paths:
            click.echo(f"figure: {p}", err=True)
    if fmt == "csv":
        import io
        buf = io.StringIO()
        report.write_csv(buf)
        _write(buf.getvalue(), out)
    else:
        _write(json.dumps(report.to_dict(), indent=2), out)


@main.command()
@_common
@click.argument("check", type=click.Choice(["clt", "lln", "fringe", "cov"]))
@click.option("--toll", "toll_specs", multiple=True, default=("size",),
              show_default=True)
@click.option("--n", type=int, default=None)
@click.option("--poisson", "lam", type=float, default=None)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--kmax", type=int, default=5, show_default=True)
@click.option("--rel-tol", type=float, default=None)
@click.option("--figures", "figures_dir", type=click.Path(), default=None,
              help="also render PNG figures into this directory")
def verify(model_spec, seed, threads, fmt, out, check, toll_specs, n, lam,
           trials, kmax, rel_tol, figures_dir):
    """Run a statistical verification suite; exit 2 on statistical failure."""
    try:
        if (n is None) == (lam is None):
            raise ValueError("give exactly one of --n or --poisson")
        model = load_model(model_spec or "sym2")
        tolls = tuple(parse_toll(s) for s in toll_specs)
        spec = _spec_from_flags(model, tolls, n, lam, trials, seed, threads,
                                label=check)
        if check == "clt":
            report = montecarlo.clt_check(spec)
        elif check == "lln":
            report = montecarlo.lln_check(spec, rel_tol=rel_tol or 0.02)
        elif check == "fringe":
            report = montecarlo.fringe_ratio_check(spec, kmax,
                                                   rel_tol=rel_tol or 0.05)
        else:
            report = montecarlo.poisson_cov_check(spec)
        for v in report.verdicts:
            status = "PASS" if v["pass"] else "FAIL"
            click.echo(f"{status}  {v['criterion']}: observed {v['observed']:.6g}"
                       + (f" target {v['target']:.6g}" if v["target"] is not None
                          else ""), err=True)
        _emit_report(report, fmt, out, figures_dir, prefix=check)
        sys.exit(0 if report.passed else 2)
    except (TrieCltError, ValueError, OSError) as exc:
        _fail(exc)


@main.command("protected-table")
@click.option("--r", type=int, default=2, show_default=True)
@click.option("--kmax", type=int, default=10, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "csv"]),
              default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None)
def protected_table(r, kmax, fmt, out):
    """Proportions of k-protected nodes in symmetric r-ary tries."""
    try:
        from . import protected_nodes as prot
        rows = prot.table(r, kmax)
        if fmt == "csv":
            lines = ["k,mfe_minus1,proportion"]
            lines += [f"{k},{c:.10f},{p:.10f}" for k, c, p in rows]
        else:
            lines = [f"{'k':>3}  {'MfE(-1)':>12}  {'proportion':>12}"]
            lines += [f"{k:>3}  {c:>12.5f}  {p:>12.5f}" for k, c, p in rows]
        _write("\n".join(lines), out)
    except (TrieCltError, ValueError, OSError) as exc:
        _fail(exc)


@main.command()
@_common
@click.option("--toll", "toll_specs", multiple=True, default=("size",),
              show_default=True)
@click.option("--n", type=int, default=None)
@click.option("--poisson", "lam", type=float, default=None)
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--figures", "figures_dir", type=click.Path(), default=None)
def export(model_spec, seed, threads, fmt, out, toll_specs, n, lam, trials,
           figures_dir):
    """Sample an experiment and export per-trial functional values (CSV)."""
    try:
        if (n is None) == (lam is None):
            raise ValueError("give exactly one of --n or --poisson")
        model = load_model(model_spec or "sym2")
        tolls = tuple(parse_toll(s) for s in toll_specs)
        spec = _spec_from_flags(model, tolls, n, lam, trials, seed, threads,
                                label="export")
        report = montecarlo.estimate_moments(spec)
        _emit_report(report, "csv" if fmt != "json" else "csv", out,
                     figures_dir, prefix="export")
    except (TrieCltError, ValueError, OSError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
