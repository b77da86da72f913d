"""Running a named experiment through the harness.

The same config and seed give byte-identical reports whatever the number
of worker processes; the command line equivalent is

    cactus-lab experiment clt --n 2000 --replicas 400 --workers 4 --out results/clt
"""
from cactuslab.harness import default_config, run_experiment

cfg = default_config("clt_harmonic", n=[2000], replicas=400, environments=2,
                     workers=4, out="results/demo_clt")
print(cfg.to_dict())
rep = run_experiment(cfg)
for line in rep.lines():
    print(line)
print("exit code", rep.exit_code, "- tables and report.json written to", cfg.out)
