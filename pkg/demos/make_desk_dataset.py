"""
Build the desk-scale training dataset for the learned reconstructor
===================================================================

Produces everything the trainer consumes through the container formats:

* ``obs/``    150 labeled phantoms (speed map + labels + tumor mask) for
              observer training; the last 50 are the held-out split
* ``recon/``  40 phantoms with simulated raw waveform tensors (8 sources);
              consumers encode them with ``desk.encw`` (or their own mode)
              so noise can be composed before encoding
* ``desk.cfg``, ``desk.encw``, ``desk.manifest``

Usage: python make_desk_dataset.py [outdir]   (default: desk_data)
"""

import os
import sys
import time

from usct import (
    AcquisitionConfig,
    ExcitationPulse,
    Grid2D,
    PhantomSpec,
    TransducerArray,
    default_spec,
    generate,
    make_encoder,
    save_phantom,
    simulate_acquisition,
    write_config,
    write_encoder,
    write_manifest,
    write_waveform,
)
from usct.io import DatasetManifest, config_to_text, fnv1a64, fnv1a64_file

N_OBSERVER = 150  # last 50 are the held-out split
N_RECON = 40  # last 8 are the validation split
ENCODER_SEED = 123
L_CHANNELS = 4


def desk_acquisition() -> AcquisitionConfig:
    grid = Grid2D(nx=48, dx=1.25e-3, pad=10)
    array = TransducerArray(radius=24.0e-3, n_receivers=32)  # 8 transmitters
    pulse = ExcitationPulse(f0=2.5e5, t0=6.0e-6, sigma=2.0e-6)
    return AcquisitionConfig(grid=grid, array=array, pulse=pulse, dt=0.4e-6,
                             n_steps=120, c_ref=1700.0)


def desk_phantom_spec(cls: str, fov: float, seed: int) -> PhantomSpec:
    base = default_spec(cls, fov, seed=seed)
    # chunkier tumors: at 48 pixels the default lower radius range starves
    # the 4-pixel component minimum
    return PhantomSpec(
        **{
            **base.__dict__,
            "tumor_radius_range": (0.035 * fov, 0.06 * fov),
            "n_tumors_range": (1, 2),
        }
    )


def main(outdir: str = "desk_data") -> None:
    cfg = desk_acquisition()
    fov = cfg.grid.fov
    os.makedirs(os.path.join(outdir, "obs"), exist_ok=True)
    os.makedirs(os.path.join(outdir, "recon"), exist_ok=True)
    files: list[str] = []

    write_config(os.path.join(outdir, "desk.cfg"), cfg)
    files.append("desk.cfg")

    encoder = make_encoder("rademacher", L_CHANNELS, cfg.array.n_transmitters,
                           seed=ENCODER_SEED)
    write_encoder(os.path.join(outdir, "desk.encw"), encoder)
    files.append("desk.encw")

    classes = "ABCD"
    t0 = time.time()
    for i in range(N_OBSERVER):
        spec = desk_phantom_spec(classes[i % 4], fov, seed=1000 + i)
        ph = generate(spec, cfg.grid)
        paths = save_phantom(ph, os.path.join(outdir, "obs", f"p{i:03d}"))
        files += [os.path.relpath(p, outdir) for p in paths]
    print(f"observer phantoms: {N_OBSERVER} in {time.time()-t0:.1f}s")

    t0 = time.time()
    for i in range(N_RECON):
        spec = desk_phantom_spec(classes[i % 4], fov, seed=5000 + i)
        ph = generate(spec, cfg.grid)
        paths = save_phantom(ph, os.path.join(outdir, "recon", f"p{i:03d}"))
        tensor = simulate_acquisition(ph.map, cfg)
        wf_path = os.path.join(outdir, "recon", f"d{i:03d}.uswf")
        write_waveform(wf_path, tensor)
        files += [os.path.relpath(p, outdir) for p in paths]
        files.append(os.path.relpath(wf_path, outdir))
    print(f"recon phantoms + raw waveforms: {N_RECON} in {time.time()-t0:.1f}s")

    manifest = DatasetManifest(
        config_hash=f"{fnv1a64(config_to_text(cfg).encode()):016x}",
        encoder=f"kind=rademacher L={L_CHANNELS} I={cfg.array.n_transmitters} seed={ENCODER_SEED}",
        noise_snr_db=None,  # waveforms are clean; noise is added online in training
        noise_seed=None,
        phantom_seeds=tuple(range(1000, 1000 + N_OBSERVER)) + tuple(range(5000, 5000 + N_RECON)),
        files=tuple((rel, f"{fnv1a64_file(os.path.join(outdir, rel)):016x}") for rel in files),
    )
    write_manifest(os.path.join(outdir, "desk.manifest"), manifest)
    print(f"wrote {outdir}/desk.manifest ({len(files)} files)")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "desk_data")
