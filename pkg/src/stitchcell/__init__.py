"""Learning-from-demonstration and visual-servoing toolkit with a simulated
three-robot sewing cell.

Subpackages:
    geometry  rigid-pose algebra, frame bookkeeping, point-set registration
    lfd       demonstration encoding (DTW + GMM/GMR) and speed scheduling
    vision    simulated camera, marker tracking, needle pose search, Kalman
    cell      deterministic sewing-cell simulator and metrics
    cli       command-line pipeline (demo-gen / learn / run / puncture-bench / report)
"""

__version__ = "0.1.0"
