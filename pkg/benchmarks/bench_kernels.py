"""Time the compiled and pure-Python kernel backends on realistic inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]

The accumulation input is a thresholded self-similarity matrix of an ABAB
clip restricted to a segment, as used by the symmetry feature; the LZSS
input is the 8-bit log-mel payload of a rendered clip.
"""
import argparse
import timeit

import numpy as np

from ocmusic import dsp, kernels, synth
from ocmusic.features import complexity, symmetry


def inputs():
    audio = synth.render(synth.abab_score(beat=0.25))
    spec = dsp.stft(audio)
    ssm = symmetry.build_ssm(dsp.chroma(spec))
    S = symmetry.threshold_ssm(ssm.sim)
    T = S.shape[0]
    segment = np.ascontiguousarray(S[:, : T // 2])
    payload = complexity.mel_payload(dsp.mel_spectrogram(spec))
    return segment, payload


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    segment, payload = inputs()
    found = kernels.backends()
    if "compiled" not in found:
        print("compiled backend not built; timing the python backend only")
    cases = {
        f"accumulated_score {segment.shape[0]}x{segment.shape[1]}": lambda mod: mod.accumulated_score(segment),
        f"lzss_compress {len(payload)} bytes": lambda mod: mod.lzss_compress(payload),
    }
    print(f"{'kernel':<34} {'backend':<9} {'best s':>10} {'speedup':>8}")
    for label, fn in cases.items():
        best = {}
        for name, mod in found.items():
            number = 1 if name == "python" else 20
            best[name] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
        for name, t in best.items():
            speed = best["python"] / t
            print(f"{label:<34} {name:<9} {t:>10.5f} {speed:>7.1f}x")
        if "compiled" in found:
            a, b = fn(found["python"]), fn(found["compiled"])
            same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else a == b
            print(f"{'':<34} outputs identical: {same}")


if __name__ == "__main__":
    main()
