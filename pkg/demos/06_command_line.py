"""Drive the command-line tool from files.

Writes a matrix with ``NA`` cells and a ``#bounds`` line, then solves it
with the annealer and the exhaustive search and prints both answers.
The same commands work from a shell:

    ssio solve --input matrix.csv --select 4
    ssio solve --input matrix.csv --select 4 --method brute

Run with ``python demos/06_command_line.py``.
"""

import contextlib
import io
import json
import tempfile
from pathlib import Path

from ssio.cli import main

MATRIX = """#bounds -1 2
1.2,0.3
NA,1.1
-0.7,0.4
0.9,-0.8
1.5,NA
0.1,0.2
"""

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "matrix.csv"
    path.write_text(MATRIX)
    for method in ("ssio", "brute"):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = main(["solve", "--input", str(path), "--select", "3", "--method", method])
        result = json.loads(buf.getvalue())
        print(f"{method:>6}: exit {code}, rows {result['s']}, cost {result['cost']:.5f}, "
              f"imputed {[(i, j, round(v, 3)) for i, j, v in result['imputed_cells']]}")
