/**
 * The WASM backend ships inference kernels only; training a convolutional
 * net additionally needs the filter gradient of conv2d. That gradient is
 * itself a convolution (input correlated with the output gradient, dilated
 * by the forward stride), so it can be registered as a composite kernel
 * built from ops the backend already has.
 *
 * Supports NHWC, dilation-1 forward convs with 'same' or 'valid' padding,
 * which covers every layer used here.
 */

import * as tf from "@tensorflow/tfjs";

export function registerWasmTrainingKernels(): void {
  if (tf.getKernel("Conv2DBackpropFilter", "wasm")) return;
  tf.registerKernel({
    kernelName: "Conv2DBackpropFilter",
    backendName: "wasm",
    kernelFunc: (args): tf.Tensor => {
      const x = args.inputs.x as tf.Tensor4D; // [B, H, W, CI]
      const dy = args.inputs.dy as tf.Tensor4D; // [B, Ho, Wo, CO]
      const attrs = args.attrs as unknown as {
        strides: number | [number, number];
        pad: "same" | "valid" | number;
        dataFormat: string;
        dimRoundingMode?: string;
        filterShape: [number, number, number, number];
      };
      if (attrs.dataFormat !== "NHWC") {
        throw new Error(`Conv2DBackpropFilter composite: only NHWC, got ${attrs.dataFormat}`);
      }
      const [sh, sw] = Array.isArray(attrs.strides)
        ? attrs.strides
        : [attrs.strides, attrs.strides];
      const [kh, kw] = attrs.filterShape;
      const [, H, W] = x.shape;
      const [, Ho, Wo] = dy.shape;
      let padT = 0;
      let padB = 0;
      let padL = 0;
      let padR = 0;
      if (attrs.pad === "same") {
        const alongH = Math.max(0, (Ho - 1) * sh + kh - H);
        const alongW = Math.max(0, (Wo - 1) * sw + kw - W);
        padT = Math.floor(alongH / 2);
        padB = alongH - padT;
        padL = Math.floor(alongW / 2);
        padR = alongW - padL;
      } else if (attrs.pad !== "valid") {
        throw new Error(`Conv2DBackpropFilter composite: unsupported pad ${attrs.pad}`);
      }
      return tf.tidy(() => {
        // batch becomes the contraction axis: correlate the padded input
        // with dy (dilated by the forward stride) to get one value per
        // filter tap
        const xT = tf.transpose(x, [3, 1, 2, 0]); // [CI, H, W, B]
        const xTp = tf.pad(xT, [
          [0, 0],
          [padT, padB],
          [padL, padR],
          [0, 0],
        ]);
        const dyT = tf.transpose(dy, [1, 2, 0, 3]); // filter [Ho, Wo, B, CO]
        const full = tf.conv2d(
          xTp as tf.Tensor4D,
          dyT as tf.Tensor4D,
          1,
          "valid",
          "NHWC",
          [sh, sw]
        ); // [CI, >=kh, >=kw, CO]
        const cropped = tf.slice(full, [0, 0, 0, 0], [full.shape[0], kh, kw, full.shape[3]]);
        return tf.transpose(cropped, [1, 2, 0, 3]); // [kh, kw, CI, CO]
      });
    },
  });
}
