"""Smoke test for the unity_consensus extension.

Build and install first:
    pip install --no-build-isolation ./crates/py
"""

import json

import unity_consensus as uc


def main():
    cfg = uc.Config.baseline()
    cfg.duration = 86_400.0
    cfg.warmup_blocks = 200
    cfg.rng_seed = 7
    report = uc.simulate(cfg)
    print(f"one day: {report.total_blocks} blocks ({report.pos_blocks} PoS, {report.pow_blocks} PoW)")
    gaps = report.interarrivals("all")
    assert abs(sum(gaps) / len(gaps) - 10) < 1
    assert json.loads(report.report_json()) == report.summary()
    assert uc.simulate(cfg).report_json() == report.report_json()

    same = uc.Config.from_text(cfg.to_text())
    assert uc.simulate(same).report_json() == report.report_json()
    try:
        uc.Config.from_text("t = 10")
    except ValueError as e:
        assert "duration" in str(e)
    else:
        raise AssertionError("missing field accepted")

    lhs, feasible = uc.double_spend_lhs(60, 60, 40, 40, 1000, 1000, 2000)
    assert feasible and lhs > 0
    ds = uc.double_spend(60, 60, 40, 40, 1000, 1000, 2000, trials=50)
    assert ds["win_rate"] >= 0.9
    print(f"double spend: lhs {lhs:.0f}, win rate {ds['win_rate']:.2f}")

    assert abs(uc.dunkle_n_bound(0.1013) - 8.87) < 0.01
    assert uc.future_mining_game()["matches_expected_accounting"]
    split = uc.split_stake(rounds=20_000)
    assert split["indistinguishable"] and split["split_evidence"] == 0
    sm = uc.selfish_mining(0.33, trials=10, horizon=50_000.0)
    assert sm["unity_revenue_share"] <= sm["control_revenue_share"]

    base = uc.Config.baseline()
    base.duration = 5_000.0
    lra = uc.long_range(base, depth=100)
    assert not lra["outcome"]["attacker_won"]
    print("smoke test passed")


if __name__ == "__main__":
    main()
