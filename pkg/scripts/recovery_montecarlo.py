#!/usr/bin/env python3
"""Monte Carlo study of the direction-finding recovery walk: bearing error
and convergence rate versus shadowing noise."""
import argparse
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from seedsim.errors import MaxStepsExceeded
from seedsim.kernel import RngStreams
from seedsim.recovery import AntennaPattern, locate, scan_rotation
from seedsim.transports import LoRaChannel


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=300)
    parser.add_argument("--distance", type=float, default=3000.0)
    parser.add_argument("--pattern", default="cardioid",
                        choices=["cardioid", "yagi"])
    parser.add_argument("--seed", type=int, default=99)
    args = parser.parse_args()

    pattern = AntennaPattern(kind=args.pattern)
    streams = RngStreams(args.seed)
    print(f"{'sigma dB':>9} {'|err|<=15deg':>13} {'median err':>11} "
          f"{'converged':>10} {'median steps':>13}")
    for sigma in (0.0, 1.0, 2.0, 4.0):
        channel = LoRaChannel(noise_sigma_db=sigma)
        rng = streams.stream(f"bearing-{sigma}")
        errors = []
        for _ in range(args.trials):
            est = scan_rotation((0.0, 0.0), 10.0, channel, (0.0, 1000.0),
                                pattern, rng if sigma > 0 else None)
            errors.append(abs((est.bearing_deg + 180.0) % 360.0 - 180.0))
        within = sum(e <= 15.0 for e in errors) / len(errors)

        rng_loc = streams.stream(f"locate-{sigma}")
        converged, steps = 0, []
        for _ in range(args.trials):
            angle = float(rng_loc.uniform(0, 2 * math.pi))
            start = (args.distance * math.sin(angle),
                     args.distance * math.cos(angle))
            try:
                result = locate(start, (0.0, 0.0), channel, pattern,
                                rng_loc if sigma > 0 else None,
                                step_length_m=150.0, max_steps=80)
                converged += 1
                steps.append(result.steps)
            except MaxStepsExceeded:
                pass
        errors.sort()
        steps.sort()
        median_err = errors[len(errors) // 2]
        median_steps = steps[len(steps) // 2] if steps else float("nan")
        print(f"{sigma:9.1f} {within:13.1%} {median_err:10.2f}d "
              f"{converged / args.trials:10.1%} {median_steps:13}")


if __name__ == "__main__":
    main()
