# SPDX-License-Identifier: Apache-2.0
"""WAV decoding checked against files written and read back with the stdlib wave module."""
import json
import math
import random
import subprocess
import sys
import tempfile
import wave
from pathlib import Path

DUMP = sys.argv[1]


def dump(path):
    out = subprocess.run([DUMP, "wav", str(path)], capture_output=True, text=True)
    return out.returncode, (json.loads(out.stdout) if out.returncode == 0 else out.stderr)


def write(path, width, channels, rate, frames):
    """frames: list of per-channel integer tuples in the container's native range."""
    raw = bytearray()
    for fr in frames:
        for v in fr:
            if width == 1:
                raw += bytes([v + 128])
            else:
                raw += int(v).to_bytes(width, "little", signed=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(bytes(raw))


def expected(path):
    """Decode with the wave module: signed integers scaled to [-1, 1), channels averaged."""
    with wave.open(str(path), "rb") as w:
        width, channels, n = w.getsampwidth(), w.getnchannels(), w.getnframes()
        data = w.readframes(n)
    full = 2 ** (8 * width - 1)
    out = []
    for i in range(n):
        vals = []
        for c in range(channels):
            off = (i * channels + c) * width
            chunk = data[off:off + width]
            v = chunk[0] - 128 if width == 1 else int.from_bytes(chunk, "little", signed=True)
            vals.append(v / full)
        out.append(sum(vals) / channels)
    return out


def main():
    rng = random.Random(7)
    failures = 0
    checked = 0
    with tempfile.TemporaryDirectory() as tmp:
        for width in (1, 2, 3):
            full = 2 ** (8 * width - 1)
            for channels in (1, 2):
                for rate in (8000, 16000, 44100):
                    n = rng.randint(1, 3000)
                    frames = [tuple(rng.randint(-full, full - 1) for _ in range(channels)) for _ in range(n)]
                    frames[0] = tuple(-full for _ in range(channels))
                    path = Path(tmp) / f"w{width}c{channels}r{rate}.wav"
                    write(path, width, channels, rate, frames)
                    code, got = dump(path)
                    if code != 0:
                        print(f"FAIL {path.name}: exit {code}: {got}")
                        failures += 1
                        continue
                    ref = expected(path)
                    err = max(abs(a - b) for a, b in zip(got["samples"], ref))
                    ok = got["sample_rate"] == rate and len(got["samples"]) == len(ref) and err <= 1e-6
                    checked += 1
                    if not ok:
                        failures += 1
                        print(f"FAIL {path.name}: rate {got['sample_rate']} len {len(got['samples'])}/{len(ref)} err {err}")

        # 32-bit integer PCM is outside the supported set and must be rejected, not misread.
        path = Path(tmp) / "w4.wav"
        write(path, 4, 1, 16000, [(v,) for v in range(-5, 5)])
        code, _ = dump(path)
        if code == 0:
            failures += 1
            print("FAIL 32-bit PCM was accepted")
        # A truncated file is rejected.
        good = Path(tmp) / "w2c1r16000.wav"
        bad = Path(tmp) / "truncated.wav"
        bad.write_bytes(good.read_bytes()[:30])
        code, _ = dump(bad)
        if code == 0:
            failures += 1
            print("FAIL truncated file was accepted")

    print(f"wav oracle: {checked} files compared, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
