"""
深度纤维聚类系统 - 命令行入口

用法:
    python app.py synth --out synthetic.ndjson
    python app.py train synthetic.ndjson --out atlas.json --plot loss.png
    python app.py infer synthetic.ndjson --atlas atlas.json --out parcellation.ndjson
    python app.py eval synthetic.ndjson parcellation.ndjson --out metrics.json
    python app.py gradcheck --seed 3
"""

import sys

from fibercluster.api.cli import main

if __name__ == '__main__':
    sys.exit(main())
