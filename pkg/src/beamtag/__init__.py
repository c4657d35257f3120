"""Detection, decoding and pose estimation of planar fiducial tags in multi-beam LiDAR scans."""
from .codebook import (DecodeResult, DecodingTable, TagFamily, build_hash_table, decode_codeword,
                       default_family, generate_lexicode, hamming, rotate_codeword, verify_family)
from .detection import (Cluster, EdgeParams, RejectReason, ValidationReport, cluster_edges,
                        detect_edges, extract_payload_edges, fill_cluster, validate_cluster)
from .errors import BeamTagError
from .pipeline import DetectionResult, DetectorConfig, detect_tags
from .pointcloud import Point, Scan, analyze_scan, build_scan, read_scan_csv, write_scan_csv
from .pose import (PartialPose, TemplateAlignment, estimate_corners, estimate_partial_pose,
                   procrustes_align, template_corners)
from .synth import (LidarModel, NoiseModel, Scene, TagTarget, apply_noise, load_scene,
                    render_scene, render_scene_with_truth)
from .voting import (BitEstimate, GridCell, Rejection, TagDetection, decode_tag,
                     equal_weight_vote, gaussian_vote, map_to_template)

__version__ = "0.1.0"
