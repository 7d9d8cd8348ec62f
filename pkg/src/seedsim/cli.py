"""Command-line entry points.

    seedsim run --scenario nominal --until 900 --out out/
    seedsim analyze tach --log flash_Seed1_a.bin [--log-b flash_Seed1_b.bin]
    seedsim analyze power --log flash_Seed1_a.bin
    seedsim extract-log --log flash.bin --csv out.csv --json out.json
    seedsim backend --http-port 8300 --sbd-port 8301 --store ingest.ndjson
    seedsim recover --distance 1500 --out path.csv
    seedsim live --backend http://127.0.0.1:8300 --sbd-port 8301
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time


def _cmd_run(args) -> int:
    from .mission import HttpBridge, run_mission
    from .scenario import load_scenario

    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    bridge = None
    if args.backend:
        sbd_host = args.backend.split("//", 1)[-1].split(":")[0]
        bridge = HttpBridge(args.backend, sbd_host, args.sbd_port)
    artifacts = run_mission(sc, bridge=bridge, out_dir=args.out, until_s=args.until)
    print(f"scenario={artifacts.scenario_name} events={len(artifacts.trace)} "
          f"digest={artifacts.trace.digest()[:16]}")
    for unit, seed_art in artifacts.seeds.items():
        print(f"  {unit.value}: {seed_art.record_count} flash records -> "
              f"{seed_art.flash_a or '(not logged)'}")
    return 0


def _load_records(args):
    from .flashlog import extract_log
    records, report = extract_log(args.log, args.log_b)
    if report.reconciled_from_b or report.corrupt_skipped:
        print(f"extraction: {report.reconciled_from_b} reconciled, "
              f"{len(report.corrupt_skipped)} skipped", file=sys.stderr)
    return records


def _cmd_analyze(args) -> int:
    from . import analysis

    records = _load_records(args)
    if args.what == "tach":
        try:
            report = analysis.validate_tachometer(records)
        except Exception as exc:
            print(f"FAIL: {type(exc).__name__}: {exc}")
            return 1
        print(f"{'PASS' if report.passed else 'FAIL'}: {report.diagnostic}")
        if args.spectra:
            import numpy as np
            sig = np.array([r.accel_precise_g[0] for r in records])
            spectra = []
            for w in report.windows:
                start = int(w.start_s * 250)
                window = sig[start:start + 1024]
                spec = analysis.fft_magnitude(window - window.mean(), 250.0,
                                              window="hann")
                spectra.append((w.start_s, spec))
            analysis.write_spectra_csv(spectra, args.spectra)
    else:
        report = analysis.power_report(records, threshold_v=args.threshold)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict}: equality={report.equality_metric:.4f} "
              f"min_v_bus={report.min_bus_voltage:.2f} V "
              f"min_v_pulses={report.min_bus_voltage_during_pulses:.2f} V")
        for flag in report.flags:
            print(f"  flag: {flag}")
    if args.report:
        analysis.write_report_json(report, args.report)
    return 0 if report.passed else 1


def _cmd_extract(args) -> int:
    from .flashlog import extract_log, write_csv, write_json

    records, report = extract_log(args.log, args.log_b)
    print(f"{len(records)} records ({report.reconciled_from_b} reconciled, "
          f"{len(report.corrupt_skipped)} skipped)")
    if args.csv:
        write_csv(records, args.csv)
    if args.json:
        write_json(records, args.json)
    return 0


def _cmd_backend(args) -> int:
    from .backend import Backend, BackendConfig, serve
    from .scenario import default_schema
    from .protocols import MessageSchema

    schema = MessageSchema.from_file(args.schema) if args.schema else default_schema()
    config = BackendConfig(store_path=args.store, fsync_batch=args.fsync_batch)
    backend = Backend(config, schema)
    handle = serve(backend, http_port=args.http_port, sbd_port=args.sbd_port,
                   host=args.host, static_dir=args.static_dir)
    print(f"backend up: http://{args.host}:{handle.http_port} "
          f"sbd={handle.sbd_port} store={args.store}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        handle.close()
    return 0


def _cmd_recover(args) -> int:
    from .kernel import RngStreams
    from .recovery import AntennaPattern, locate, write_path_csv
    from .transports import LoRaChannel

    if args.scenario:
        with open(args.scenario) as fh:
            spec = json.load(fh)
        channel = LoRaChannel(**spec.get("channel", {}))
        pattern = AntennaPattern(**spec.get("pattern", {}))
        start = tuple(spec.get("device_start", (0.0, -args.distance)))
        target = tuple(spec.get("seed_position", (0.0, 0.0)))
        step = spec.get("step_length_m", args.step)
        max_steps = spec.get("max_steps", 100)
        capture = spec.get("capture_radius_m", 25.0)
        seed = spec.get("seed", args.seed)
        noisy = channel.noise_sigma_db > 0
    else:
        channel = LoRaChannel(noise_sigma_db=args.noise)
        pattern = AntennaPattern(kind=args.pattern)
        start, target = (0.0, -args.distance), (0.0, 0.0)
        step, max_steps, capture, seed = args.step, 100, 25.0, args.seed
        noisy = args.noise > 0
    rng = RngStreams(seed).stream("recovery") if noisy else None
    try:
        result = locate(start, target, channel, pattern, rng, step_length_m=step,
                        max_steps=max_steps, capture_radius_m=capture)
    except Exception as exc:
        print(f"FAIL: {type(exc).__name__}: {exc}")
        return 1
    print(f"captured after {result.steps} steps, final distance "
          f"{result.final_distance_m:.1f} m")
    if args.out:
        write_path_csv(result, args.out)
    return 0


def _cmd_live(args) -> int:
    """Wall-clock paced pad test feeding a running backend (for the operator UI)."""
    from .live import run_live
    return run_live(args)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="seedsim")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario")
    p.add_argument("--scenario", default="nominal",
                   help="builtin name or path to a scenario JSON")
    p.add_argument("--until", type=float, default=None, help="stop after N seconds")
    p.add_argument("--out", default=None, help="artifact output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--backend", default=None, help="live backend base URL")
    p.add_argument("--sbd-port", type=int, default=8301)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("analyze", help="post-run analysis of a flash log")
    p.add_argument("what", choices=["tach", "power"])
    p.add_argument("--log", required=True)
    p.add_argument("--log-b", default=None)
    p.add_argument("--threshold", type=float, default=7.5)
    p.add_argument("--report", default=None, help="write JSON report here")
    p.add_argument("--spectra", default=None, help="plot-ready CSV of window spectra")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("extract-log", help="flash log to CSV/JSON")
    p.add_argument("--log", required=True)
    p.add_argument("--log-b", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("backend", help="run the ground-station backend")
    p.add_argument("--http-port", type=int, default=int(os.environ.get("SEEDSIM_HTTP_PORT", 8300)))
    p.add_argument("--sbd-port", type=int, default=int(os.environ.get("SEEDSIM_SBD_PORT", 8301)))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default="ingest.ndjson")
    p.add_argument("--schema", default=None, help="message definition JSON")
    p.add_argument("--fsync-batch", type=int, default=1)
    p.add_argument("--static-dir", default=None, help="serve the operator UI from here")
    p.set_defaults(fn=_cmd_backend)

    p = sub.add_parser("recover", help="run the recovery walk simulation")
    p.add_argument("--scenario", default=None, help="recovery scenario JSON")
    p.add_argument("--distance", type=float, default=1000.0)
    p.add_argument("--step", type=float, default=100.0)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--pattern", default="cardioid", choices=["cardioid", "yagi", "omni"])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", default=None, help="path CSV output")
    p.set_defaults(fn=_cmd_recover)

    p = sub.add_parser("live", help="wall-clock pad test against a live backend")
    p.add_argument("--backend", default="http://127.0.0.1:8300")
    p.add_argument("--sbd-port", type=int, default=8301)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--rate", type=float, default=2.0, help="status messages per second")
    p.add_argument("--seed", type=int, default=11)
    p.set_defaults(fn=_cmd_live)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
