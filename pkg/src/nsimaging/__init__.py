"""Null subtraction imaging for plane-wave ultrasound.

Point-scatterer simulation, delay-and-sum beamforming with zero-mean and
DC-offset apodizations, coherent and filtered-incoherent NSI compounding,
Hann and GCF baselines, image metrics and a reproducible CLI pipeline.
"""

__version__ = "0.1.0"

from ._accel import backend_name
from .beamform import RfImage, beamform_stack, das_beamform, das_beamform_many, interpolate_sample, receive_delay
from .compound import (BModeImage, EnvelopeImage, FirFilter, GcfConfig, NsiEnvelope, cnsi, design_angular_lpf,
                       envelope, filter_angles, gcf_image, gcf_weight, hann_compound, icnsi, measure_lpf, nsi_combine,
                       to_db)
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .core import (AcquisitionConfig, Apodization, ApodizationType, ArrayGeometry, ImageGrid, InvalidArgument,
                   PulseModel, make_dc_apodization, make_hann_apodization, make_zero_mean_apodization,
                   nsi_apodizations, subaperture_for_pixel, symmetric_angles)
from .formats import RfFormatError, export_image, read_rf, write_rf
from .metrics import (GratingLobeReport, LateralProfile, Roi, cnr, fwhm_lateral, grating_lobe_level,
                      grating_lobe_reduction, lateral_integrated_power_profile, predicted_grating_angle, speckle_snr)
from .pipeline import StageError, run_pipeline, run_sweep
from .simulate import (ChannelData, Inclusion, Scatterer, add_noise, make_speckle_phantom, plane_wave_tx_delay,
                       synthesize_channel_data)
