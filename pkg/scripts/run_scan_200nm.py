#!/usr/bin/env python3
"""Absorber-onset scan at 200 nm (higher photon energy, L_max = 7).

Side lobes near theta = pi/2 +- pi/6 in the absorption-angle
distribution are much more prominent here than at 400 nm, with the same
decrease as R_c grows.  Cutoff choice as in run_scan_400nm.py.
"""
import sys

from capspectra.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/scan200"
    sys.exit(main([
        "scan-rc", "--preset", "200nm",
        "--rc", "40,60,80,100,120",
        "--cutoff-c", "1e-8",
        "--out", out,
    ]))
