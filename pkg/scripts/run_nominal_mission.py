#!/usr/bin/env python3
"""Run the full nominal mission offline and summarize what came down."""
import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from seedsim.flashlog import extract_log
from seedsim.kernel import Unit
from seedsim.mission import run_mission
from seedsim.scenario import nominal_scenario
from seedsim.sensors import MissionPhase


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="out/nominal")
    parser.add_argument("--seed", type=int, default=2029)
    parser.add_argument("--apogee-km", type=float, default=80.0)
    args = parser.parse_args()

    sc = nominal_scenario(seed=args.seed, apogee_m=args.apogee_km * 1000)
    art = run_mission(sc, out_dir=args.out)
    print(f"mission complete: {art.duration_s:.0f}s simulated, "
          f"{len(art.trace)} events, ejection at t={art.ejection_time_s:.1f}s")
    print(f"rxsm frames downlinked: {len(art.bridge.frames)}")
    print(f"satellite messages: {len(art.bridge.sbd_payloads)}")
    for unit in (Unit.Seed1, Unit.Seed2):
        seed_art = art.seeds[unit]
        records, report = extract_log(seed_art.flash_a, seed_art.flash_b)
        phases = sorted({MissionPhase(r.phase).name for r in records})
        apex_mm = max(r.alt_mm for r in records)
        print(f"{unit.value}: {len(records)} flash records "
              f"({report.reconciled_from_b} reconciled), phases {phases}, "
              f"max GPS altitude {apex_mm / 1e6:.1f} km")
    bus_errors = art.trace.find(target="can.main", label_contains="bus-error")
    print(f"post-ejection bus errors observed: {len(bus_errors)}")


if __name__ == "__main__":
    main()
