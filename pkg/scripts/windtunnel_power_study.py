#!/usr/bin/env python3
"""Reproduce the bench verification: run the wind-tunnel scenario, check the
rotor-harmonic spectrum against the tachometer, and report string sharing."""
import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from seedsim.analysis import (
    fft_magnitude, power_report, validate_tachometer, write_report_json,
    write_spectra_csv,
)
from seedsim.flashlog import extract_log
from seedsim.kernel import Unit
from seedsim.mission import run_mission
from seedsim.scenario import windtunnel_scenario


def run_variant(name, out_dir, imbalanced=False, bat2_disabled=False):
    sc = windtunnel_scenario(imbalanced=imbalanced, bat2_disabled=bat2_disabled)
    art = run_mission(sc, out_dir=os.path.join(out_dir, name))
    seed_art = art.seeds[Unit.Seed1]
    records, _ = extract_log(seed_art.flash_a, seed_art.flash_b)

    tach = validate_tachometer(records)
    print(f"[{name}] tachometer: {'PASS' if tach.passed else 'FAIL'} "
          f"({tach.analyzed} windows) {tach.diagnostic}")
    power = power_report(records)
    print(f"[{name}] power: {'PASS' if power.passed else 'FAIL'} "
          f"equality={power.equality_metric:.4f} "
          f"min V during pulses={power.min_bus_voltage_during_pulses:.2f}")
    for flag in power.flags:
        print(f"[{name}]   flag: {flag}")

    write_report_json(tach, os.path.join(out_dir, f"{name}_tach.json"))
    write_report_json(power, os.path.join(out_dir, f"{name}_power.json"))
    spectra = []
    import numpy as np
    sig = np.array([r.accel_precise_g[0] for r in records])
    for w in tach.windows:
        start = int(w.start_s * 250)
        spec = fft_magnitude(sig[start:start + 1024] - sig[start:start + 1024].mean(),
                             250.0, window="hann")
        spectra.append((w.start_s, spec))
    write_spectra_csv(spectra, os.path.join(out_dir, f"{name}_spectra.csv"))
    return tach.passed, power.passed


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="out/windtunnel")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    run_variant("nominal", args.out)
    run_variant("imbalanced", args.out, imbalanced=True)
    run_variant("string2_disabled", args.out, bat2_disabled=True)


if __name__ == "__main__":
    main()
