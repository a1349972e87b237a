"""Reference scorer plugin speaking the line-delimited JSON protocol.

Scores a pair by the Jaccard overlap of its lowercased word sets. Run it as
``python -m lexfuse.plugin`` and pass that command to ``--scorer-command``.
"""

import json
import sys

from .lexical import tokenize


def jaccard(a: str, b: str) -> float:
    sa, sb = set(tokenize(a)), set(tokenize(b))
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def main(stdin=sys.stdin, stdout=sys.stdout) -> int:
    for line in stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        stdout.write(json.dumps({"id": req["id"], "score": jaccard(req["a"], req["b"])}) + "\n")
        stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
