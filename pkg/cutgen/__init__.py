"""
.. include:: ../README.md

## Basic usage

Point a config file at a C++ project and run the pipeline from the command line:

```yaml
# cutgen.yaml
root: ../yaml-cpp
test_dir: test
include_roots: [include]
```

```shell
$ cutgen scan
$ cutgen generate --focal 'Node::*'
$ cutgen evaluate --out report.json
```

The same steps are available from Python through a session:

```python
from cutgen.config import load_config
from cutgen.session import Session

config = load_config("cutgen.yaml", mock_provider="script.yaml")
sess = Session.from_config(config)

for outcome in sess.generate():  # [MethodOutcome(...), ...]
    print(outcome.focal.id, outcome.status)
report = sess.evaluate()  # <MetricsReport: CSR, EPR, coverage>
print(report.render_table())
```

## Repair

Generated files go through three repair phases, in order and each at most once:

```python
>>> from cutgen.repair import balance_brackets
>>> balance_brackets("TEST(A, B) {\\n    EXPECT_EQ(1, 1);\\n")
'TEST(A, B) {\\n    EXPECT_EQ(1, 1);\\n}\\n'
```
"""
