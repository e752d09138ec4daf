import numpy as np

from topo_trojan import ModelEntry, ModelScanner, PerturbConfig, build_theorem_networks
from topo_trojan.experiments import theorem1_report
from topo_trojan.features import FEATURE_NAMES


def main():
    # Closed-form and sampled gaps between the clean and the Trojaned network
    report = theorem1_report(sample_count=20000, seed=0)
    for gap in report.gaps:
        print(f"{gap.kernel.value}: analytic d_b={gap.analytic_db:.4f} sampled d_b={gap.sampled_db:.4f}")
    print(f"R(f1; D1)={report.risk_f1_d1:.3f}  R(f2; D2)={report.risk_f2_d2:.3f}")
    for note in report.discrepancies:
        print(f"discrepancy: {note}")

    # Scan both networks the way a detector would see them
    f1, f2 = build_theorem_networks()
    models = [
        ModelEntry(model_id="clean", network=f1, label=0),
        ModelEntry(model_id="trojan", network=f2, label=1),
    ]
    clean_samples = np.array([[-3.0, -3.0], [3.0, -3.0], [-3.0, 3.0], [3.0, 3.0]])
    scanner = ModelScanner(
        clean_samples,
        PerturbConfig(trials_per_image=50, ranges=[(-4.0, 4.0)], seed=0),
        kernel="cosine",
        enable_file_output=False,
    )

    print("Scanning models...")
    for record in scanner.scan_batch_sync(models):
        features = dict(zip(FEATURE_NAMES, record["features"]))
        print(f"Scanned {record['id']}: Success={record['success']} f11={features['f11']:.4f}")


if __name__ == "__main__":
    main()
