//! The full pipeline: circle detection followed by contour deformation.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::deform::{deform, propose_contour, ContourNet, ProposalMode, SnakeConfig};
use crate::detect::{decode_detections, BackboneConfig, Detection, Detector, OUTPUT_STRIDE};
use crate::error::Result;
use crate::eval::{Prediction, SegmentationModel};
use crate::geom::sample_contour;
use crate::tensor::{Element, Tensor};

/// Detector + contour network with shared features.
pub struct Pipeline<E: Element> {
    pub detector: Detector<E>,
    pub snake: ContourNet<E>,
    pub peak_budget: usize,
}

impl<E: Element> Pipeline<E> {
    pub fn new(backbone: &BackboneConfig, snake_cfg: &SnakeConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let detector = Detector::new(backbone, &mut rng);
        let snake = ContourNet::new(snake_cfg, backbone.head_channels, &mut rng);
        Pipeline {
            detector,
            snake,
            peak_budget: 100,
        }
    }

    pub fn stride(&self) -> usize {
        OUTPUT_STRIDE
    }

    pub fn named_params(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let Pipeline {
            detector, snake, ..
        } = self;
        let mut out = detector.named_params();
        out.extend(snake.named_params());
        out
    }

    pub fn named_buffers(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        self.detector.named_buffers()
    }

    pub fn zero_grads(&mut self) {
        self.detector.zero_grads();
        self.snake.zero_grads();
    }

    /// Full inference on one `[3, H, W]` image: detect circles, propose
    /// contours, deform. With `refine` false the proposal itself is emitted
    /// (the identity-snake baseline).
    pub fn infer(
        &mut self,
        image: &Tensor<E>,
        score_threshold: f64,
        mode: ProposalMode,
        refine: bool,
    ) -> Result<Vec<Prediction>> {
        let (output, features) = self.detector.forward_eval(image)?;
        let detections =
            decode_detections(&output, OUTPUT_STRIDE, self.peak_budget, score_threshold);
        self.contours_for(&detections, &features, mode, refine)
    }

    /// Contour stage only (detections already decoded).
    pub fn contours_for(
        &self,
        detections: &[Detection],
        features: &Tensor<E>,
        mode: ProposalMode,
        refine: bool,
    ) -> Result<Vec<Prediction>> {
        let n = self.snake.config.vertex_count;
        let mut out = Vec::with_capacity(detections.len());
        for det in detections {
            let proposal = propose_contour(&det.circle, n, mode)?;
            let contour = if refine {
                let (iterates, _) = deform(&self.snake, &proposal, features, OUTPUT_STRIDE)?;
                iterates.into_iter().last().expect("at least one iteration")
            } else {
                proposal
            };
            out.push(Prediction {
                class_id: det.class_id,
                score: det.score,
                circle: det.circle,
                contour,
            });
        }
        Ok(out)
    }

    /// Resamples a ground-truth boundary into the snake's target contour.
    pub fn ground_truth_contour(&self, boundary: &crate::geom::Contour) -> Result<crate::geom::Contour> {
        sample_contour(boundary, self.snake.config.vertex_count)
    }
}

/// Adapter running the pipeline under the rotation-consistency harness.
pub struct PipelineModel<'a> {
    pub pipeline: &'a mut Pipeline<f32>,
    pub score_threshold: f64,
    pub mode: ProposalMode,
    pub refine: bool,
}

impl SegmentationModel for PipelineModel<'_> {
    fn predict(&mut self, image: &Tensor<f32>) -> Result<Vec<Prediction>> {
        self.pipeline
            .infer(image, self.score_threshold, self.mode, self.refine)
    }
}
