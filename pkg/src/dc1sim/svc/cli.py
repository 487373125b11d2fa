"""The dc1 command line: thin shells over the library operations.

Exit codes: 0 success, 1 operational failure (bad input data, deadlock),
2 usage error (click's default for bad flags).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from dc1sim import catalogs as cat
from dc1sim import core, farm, genfilter, pileup, reco, validate
from dc1sim import vdc as vdcmod
from dc1sim.svc.campaign import Campaign, CampaignConfig


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Desk-scale Monte Carlo production campaign toolkit."""


@main.command()
@click.option("--process", type=click.Choice(["single_particle", "minbias",
                                              "dijet"]), required=True)
@click.option("--events", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--filter-threshold", type=float, default=None,
              help="Di-jet tower filter threshold in GeV; only passing "
                   "events are written.")
@click.option("--dataset-id", type=int, default=0)
@click.option("--partition", type=int, default=0)
def gen(process, events, seed, out, filter_threshold, dataset_id, partition):
    """Generate a partition of toy events."""
    params = genfilter.params_for(core.Process(process))
    kept = []
    attempt = 0
    max_attempts = events * 1000
    while len(kept) < events and attempt < max_attempts:
        ev_seed = int(core.seeded_rng(seed, f"gen:attempt:{attempt}")
                      .integers(0, 2 ** 62))
        ev = genfilter.generate_event(params, ev_seed, event_id=len(kept))
        attempt += 1
        if filter_threshold is not None and not genfilter.dijet_filter(
                ev, filter_threshold):
            continue
        kept.append(ev)
    if len(kept) < events:
        _fail(f"filter accepted only {len(kept)}/{events} events")
    header = core.PartitionHeader(dataset_id, partition, core.Process(process),
                                  len(kept),
                                  params=(("seed", str(seed)),))
    n = core.write_partition(out, core.PartitionFile(header, tuple(kept)))
    click.echo(f"wrote {len(kept)} events ({n} bytes) to {out}")


@main.command()
@click.option("--in", "input_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def simulate(input_path, out):
    """Digitize a generated partition into detector hits."""
    try:
        part = core.read_partition(input_path)
    except core.PartitionError as exc:
        _fail(str(exc))
    cost = core.DEFAULT_COST_MODEL
    body = []
    for ev in part.body:
        entry = cost.simulation(ev.process) if ev.process in (
            core.Process.SINGLE_PARTICLE, core.Process.MINBIAS,
            core.Process.DIJET) else core.CostEntry(1.0, 1.0)
        body.append(pileup.digitize_event(ev, entry.size_mb, entry.cpu_si95s))
    header = core.PartitionHeader(part.header.dataset_id,
                                  part.header.partition_number,
                                  part.header.process, len(body),
                                  part.header.params)
    core.write_partition(out, core.PartitionFile(header, tuple(body)))
    click.echo(f"digitized {len(body)} events to {out}")


@main.command()
@click.option("--minbias", "minbias_path", type=click.Path(exists=True),
              required=True)
@click.option("--flux", "flux_path", type=click.Path(exists=True),
              default=None, help="Flux table config; built-in default if omitted.")
@click.option("--safety", type=click.Choice(["1", "2", "5"]), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
def premix(minbias_path, flux_path, safety, seed, out):
    """Mix cavern background into a minbias partition."""
    try:
        part = core.read_partition(minbias_path)
    except core.PartitionError as exc:
        _fail(str(exc))
    flux = (pileup.load_flux_table(flux_path) if flux_path
            else pileup.DEFAULT_FLUX)
    cavern = pileup.sample_cavern(flux, max(len(part.body), 1) * int(safety),
                                  seed, first_event_id=10 ** 9)
    mixed = pileup.premix(part.body, cavern, int(safety), seed)
    header = core.PartitionHeader(part.header.dataset_id,
                                  part.header.partition_number,
                                  core.Process.MINBIAS, len(mixed),
                                  (("safety_factor", safety),))
    core.write_partition(out, core.PartitionFile(header, tuple(mixed)))
    click.echo(f"premixed {len(mixed)} events (safety {safety}) to {out}")


@main.command("pileup")
@click.option("--physics", "physics_path", type=click.Path(exists=True),
              required=True, help="Digitized physics partition.")
@click.option("--minbias", "minbias_path", type=click.Path(exists=True),
              required=True, help="Premixed minbias partition.")
@click.option("--lumi", type=click.Choice(["low", "high"]), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
def pileup_cmd(physics_path, minbias_path, lumi, seed, out):
    """Overlay pile-up onto a digitized physics partition."""
    try:
        physics = core.read_partition(physics_path)
        minbias = core.read_partition(minbias_path)
    except core.PartitionError as exc:
        _fail(str(exc))
    lumi_cfg = core.LOW_LUMI if lumi == "low" else core.HIGH_LUMI
    pool = list(minbias.body)
    try:
        body = tuple(pileup.overlay(ev, pool, lumi_cfg, seed=seed + i)
                     for i, ev in enumerate(physics.body))
    except pileup.PileupError as exc:
        _fail(str(exc))
    header = core.PartitionHeader(physics.header.dataset_id,
                                  physics.header.partition_number,
                                  physics.header.process, len(body),
                                  (("lumi", lumi),))
    core.write_partition(out, core.PartitionFile(header, body))
    click.echo(f"piled up {len(body)} events at {lumi} luminosity to {out}")


@main.command("reco")
@click.option("--in", "input_path", type=click.Path(exists=True), required=True)
@click.option("--lumi", type=click.Choice(["low", "high"]), required=True)
@click.option("--out", type=click.Path(), required=True)
def reco_cmd(input_path, lumi, out):
    """Reconstruct a piled-up partition into summary records."""
    try:
        part = core.read_partition(input_path)
    except core.PartitionError as exc:
        _fail(str(exc))
    lumi_cfg = core.LOW_LUMI if lumi == "low" else core.HIGH_LUMI
    summaries = [reco.reconstruct(ev, lumi_cfg) for ev in part.body]
    with open(out, "w") as fh:
        json.dump([{
            "event_id": s.event_id, "n_tracks": s.n_tracks,
            "n_clusters": s.n_clusters,
            "jets": [[j.pt, j.eta, j.phi, j.constituent_count]
                     for j in s.jets],
            "size_mb": s.size_mb, "cpu_si95s": s.cpu_si95s,
        } for s in summaries], fh, sort_keys=True, indent=1)
    click.echo(f"reconstructed {len(summaries)} events to {out}")


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True),
              required=True)
@click.option("--seed", type=int, default=0)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--report-out", type=click.Path(), default=None)
def run(plan_path, seed, config_path, report_out):
    """Run a production plan on the simulated farm."""
    config = CampaignConfig.load(config_path)
    campaign = Campaign(config)
    plan = farm.load_plan(plan_path)
    plan_id = campaign.create_plan(plan)
    try:
        state = campaign.run_plan(plan_id, seed=seed, background=False)
    except farm.DeadlockError as exc:
        _fail(str(exc))
    if state.state == "failed":
        _fail(state.error or "production failed")
    campaign.write_progress(state.simulator.snapshot_progress())
    report = state.simulator.report().to_dict()
    text = json.dumps(report, sort_keys=True, indent=1)
    if report_out:
        Path(report_out).write_text(text + "\n")
    click.echo(text)
    campaign.close()


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def status(config_path):
    """Show campaign progress (same fields as GET /v1/progress)."""
    config = CampaignConfig.load(config_path)
    progress_path = Path(config.data_dir) / "progress.json"
    if not progress_path.exists():
        _fail(f"no progress recorded under {config.data_dir}")
    click.echo(json.dumps(json.loads(progress_path.read_text()),
                          sort_keys=True, indent=1))


@main.command("validate")
@click.option("--ref", "ref_path", type=click.Path(exists=True), required=True)
@click.option("--cand", "cand_path", type=click.Path(exists=True),
              required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              required=True)
@click.option("--threshold", type=float, default=2.0)
@click.option("--report-out", type=click.Path(), default=None)
def validate_cmd(ref_path, cand_path, spec_path, threshold, report_out):
    """Compare two partitions histogram by histogram."""
    try:
        ref = core.read_partition(ref_path).body
        cand = core.read_partition(cand_path).body
        specs = validate.parse_spec_file(spec_path)
        report = validate.validate_site(cand, ref, specs, threshold)
    except (core.PartitionError, validate.HistogramError) as exc:
        _fail(str(exc))
    click.echo(validate.render_summary(report.chart))
    click.echo(f"result: {'PASS' if report.passed else 'FAIL'} "
               f"(threshold chi2/ndf <= {threshold})")
    if report_out:
        Path(report_out).write_text(json.dumps(report.to_dict(),
                                               sort_keys=True, indent=1) + "\n")
    if not report.passed:
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8801)
def serve(config_path, host, port):
    """Start the HTTP API (and the operator console when bundled)."""
    import uvicorn

    from dc1sim.svc.api import create_app

    config = CampaignConfig.load(config_path)
    campaign = Campaign(config)
    static = Path(__file__).resolve().parents[3] / "frontend" / "dist"
    app = create_app(campaign, static_dir=static if static.is_dir() else None)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
