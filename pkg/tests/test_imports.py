try:
    from topo_trojan import (
        ModelScanner,
        NetworkSpec,
        PersistenceDiagram,
        bottleneck_distance,
        build_filtration,
        run_pipeline,
        train_detector,
    )
    from topo_trojan.cli import main
    print("Imports successful!")
except ImportError as e:
    print(f"Import failed: {e}")
    exit(1)
