"""Quick end-to-end check of the catlearn_py extension module.

Build it first, e.g. `maturin develop -m crates/python/Cargo.toml --release`.
"""

import math

import catlearn_py as cl


def main() -> None:
    assert abs(cl.power_transform(0.5) - 2 * (0.5 ** 0.1 - 0.5)) < 1e-12
    assert abs(cl.chi2_sf(3.841458820694124, 1) - 0.05) < 1e-9

    grid = cl.full_grid()
    assert len(grid) == 27
    print(grid[0])

    exemplars = cl.generate_dataset(seed=1)
    assert len(exemplars) == 16 and all(len(f) == 2 for f, _ in exemplars)

    lj = cl.log_joint(
        p=[0.6, 0.4],
        k=[0.5, 0.5],
        omega=0.3,
        sigma=[[1.0, 1.0], [1.0, 1.0]],
        mu=[[0.0, 2.0], [0.0, 0.0]],
        exemplars=exemplars,
        domain_bias="none",
        label_bias="right",
        w=0.3,
        s=0.03,
    )
    assert math.isfinite(lj)

    cond = cl.Condition("none", "right", 0.3, 0.03)
    records = cl.run_grid([cond], n_seeds=1, n_blocks=2, n_chains=2, n_warmup=300, n_samples=150)
    assert len(records) == 2 * 75 * 16
    rows = cl.summarize(records)
    for row in rows:
        print(f"block {row['block']}: accuracy {row['mean_accuracy']:.3f} ± {row['se']:.3f}")
    assert len(rows) == 2 and all(0.0 <= r["mean_accuracy"] <= 1.0 for r in rows)

    try:
        cl.analyze(records)
    except ValueError as e:
        print(f"analyze rejects a single-level design: {e}")
    else:
        raise AssertionError("expected a rank-deficiency error")

    print("smoke test passed")


if __name__ == "__main__":
    main()
