#!/usr/bin/env python3
"""Steerable demo run: a slow binary demix with the steering service up.

Prints the TCP endpoint (wire protocol) and, when --http-port is given,
the browser console URL. Point the console at the run, watch phi slices,
and poke output_period / couplings / shear while it goes. The run idles
at max_steps 0 until a stop command arrives.
"""
import argparse
from pathlib import Path

from lbflow.model import (SimConfig, ComponentSpec, CouplingMatrix,
                          InitConfig, OutputConfig, SteeringConfig)
from lbflow.runner import Runner

CONSOLE = Path(__file__).resolve().parents[1] / "frontend" / "dist"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=48)
    ap.add_argument("--steps", type=int, default=0,
                    help="0 runs until a steering stop")
    ap.add_argument("--port", type=int, default=4710)
    ap.add_argument("--http-port", type=int, default=8089)
    ap.add_argument("--registry", default="",
                    help="host:port of a registry to announce to")
    ap.add_argument("--out", default="out/steerdemo")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    comps = [ComponentSpec("red", tau=1.0, colour_charge=1.0),
             ComponentSpec("blue", tau=1.0, colour_charge=-1.0)]
    cm = CouplingMatrix()
    cm.set_g("red", "blue", 0.05)
    cfg = SimConfig(
        nx=args.size, ny=args.size, nz=args.size,
        components=comps, couplings=cm, workers=args.workers,
        max_steps=args.steps,
        init=InitConfig(mode="random",
                        densities={"red": 0.5, "blue": 0.5}, seed=7),
        output=OutputConfig(run_id="steerdemo", directory=args.out,
                            period=100, fields=("phi", "ux")),
        steering=SteeringConfig(enabled=True, port=args.port,
                                http_port=args.http_port,
                                console_dir=str(CONSOLE) if CONSOLE.is_dir()
                                else "",
                                registry=args.registry))

    runner = Runner(cfg).attach_steering()
    print(f"wire protocol on tcp://127.0.0.1:{runner.service.tcp_port}")
    if runner.service.http_port:
        print(f"console at http://127.0.0.1:{runner.service.http_port}/")
        if not CONSOLE.is_dir():
            print("  (frontend/dist not built; /info and /ws still served)")
    try:
        runner.run()
    except KeyboardInterrupt:
        print("interrupted")
    finally:
        runner.detach_steering()


if __name__ == "__main__":
    main()
