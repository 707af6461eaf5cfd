/**
 * Training objectives for the learned reconstructor.
 *
 * The base loss is half the batch-mean squared error between predicted and
 * true images. The task-informed variant adds, with weight gamma, the
 * squared discrepancy between observer feature stacks of prediction and
 * truth; gamma = 0 reduces to the plain loss bit-for-bit (the feature
 * branch is never evaluated), and gamma = Infinity drops the image term.
 */

import * as tf from "@tensorflow/tfjs";

export type FeatureFn = (images: tf.Tensor4D) => tf.Tensor[];

function sumSquaresPerSample(diff: tf.Tensor): tf.Tensor {
  const flat = diff.reshape([diff.shape[0] as number, -1]);
  return flat.square().sum(1);
}

export function mseLoss(pred: tf.Tensor4D, truth: tf.Tensor4D): tf.Scalar {
  return tf.tidy(
    () => sumSquaresPerSample(pred.sub(truth)).mean().mul(0.5) as tf.Scalar
  );
}

export function taskTerm(pred: tf.Tensor4D, truth: tf.Tensor4D, features: FeatureFn): tf.Scalar {
  return tf.tidy(() => {
    const fa = features(pred);
    const fb = features(truth);
    let total: tf.Tensor | null = null;
    for (let i = 0; i < fa.length; i++) {
      const sse = sumSquaresPerSample(fa[i].sub(fb[i]));
      total = total === null ? sse : total.add(sse);
    }
    return (total as tf.Tensor).mean() as tf.Scalar;
  });
}

export function taskInformedLoss(
  pred: tf.Tensor4D,
  truth: tf.Tensor4D,
  features: FeatureFn,
  gamma: number
): tf.Scalar {
  if (gamma < 0 || Number.isNaN(gamma)) {
    throw new Error(`gamma must be in [0, Infinity], got ${gamma}`);
  }
  if (gamma === 0) return mseLoss(pred, truth);
  if (gamma === Infinity) {
    return tf.tidy(() => taskTerm(pred, truth, features).mul(0.5) as tf.Scalar);
  }
  return tf.tidy(() => {
    const img = sumSquaresPerSample(pred.sub(truth));
    const task = taskTerm(pred, truth, features);
    return img.mean().add(task.mul(gamma)).mul(0.5) as tf.Scalar;
  });
}
