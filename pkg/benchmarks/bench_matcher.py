"""Benchmark the matcher scan kernel: numba JIT vs pure-Python fallback.

Builds a synthetic thesaurus and document, then times the same kernel body
on both paths. The JIT path is skipped when numba is unavailable or when
BIOTRIPLETS_DISABLE_NUMBA=1 is set.

Usage: python benchmarks/bench_matcher.py [--terms N] [--words N] [--repeat N]
"""

import argparse
import random
import time

import numpy as np

from biotriplets._kernels import NUMBA_ENABLED, _scan_forward_impl, scan_forward
from biotriplets.matcher import MatcherAutomaton, Thesaurus

WORDS = [
    "acute", "chronic", "renal", "hepatic", "cardiac", "syndrome", "failure",
    "infection", "therapy", "culture", "biopsy", "lesion", "edema", "fever",
    "count", "blood", "serum", "nodal", "gastric", "pulmonary", "lavage",
]


def build_inputs(n_terms: int, n_words: int, seed: int = 7):
    rng = random.Random(seed)
    thesaurus = Thesaurus()
    surfaces = set()
    while len(surfaces) < n_terms:
        surfaces.add(" ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 3))))
    for i, surface in enumerate(sorted(surfaces)):
        thesaurus.add(surface, f"C{i:05d}", ["Sign, Symptom, or Finding"])
    automaton = MatcherAutomaton(thesaurus)
    text = " ".join(rng.choice(WORDS + ["filler", "zzz"]) for _ in range(n_words))
    codes, is_word = automaton.encode(text)
    return automaton, codes, is_word


def run_kernel(kernel, automaton, codes, is_word):
    out_starts = np.empty(len(codes), dtype=np.int32)
    out_lens = np.empty(len(codes), dtype=np.int32)
    count = kernel(
        codes, is_word,
        automaton.edge_start, automaton.edge_char, automaton.edge_dest,
        automaton.fail, automaton.out_link, automaton.word_len,
        out_starts, out_lens,
    )
    return out_starts[:count].copy(), out_lens[:count].copy()


def bench(kernel, automaton, codes, is_word, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        run_kernel(kernel, automaton, codes, is_word)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--terms", type=int, default=3000)
    parser.add_argument("--words", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    automaton, codes, is_word = build_inputs(args.terms, args.words)
    print(f"{args.terms} terms, {len(codes)} chars, best of {args.repeat} runs")

    pure = bench(_scan_forward_impl, automaton, codes, is_word, args.repeat)
    print(f"pure python : {pure * 1000:9.1f} ms")

    if not NUMBA_ENABLED:
        print("numba jit   : unavailable (numba missing or disabled by env)")
        return

    run_kernel(scan_forward, automaton, codes, is_word)  # warm up compilation
    jit = bench(scan_forward, automaton, codes, is_word, args.repeat)
    print(f"numba jit   : {jit * 1000:9.1f} ms  ({pure / jit:.1f}x speedup)")

    starts_a, lens_a = run_kernel(_scan_forward_impl, automaton, codes, is_word)
    starts_b, lens_b = run_kernel(scan_forward, automaton, codes, is_word)
    assert np.array_equal(starts_a, starts_b) and np.array_equal(lens_a, lens_b)
    print(f"outputs identical across paths ({len(starts_a)} matches)")


if __name__ == "__main__":
    main()
