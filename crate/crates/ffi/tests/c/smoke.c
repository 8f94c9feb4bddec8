#include <math.h>
#include <stdio.h>
#include <string.h>

#include "netrecon.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    NrStatus s_ = (call);                                                  \
    if (s_ != NR_STATUS_OK) {                                              \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, nr_last_error_message()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  NrData *data = NULL;
  NrModel *model = NULL;
  NrDraws *draws = NULL;
  CHECK(nr_data_parse("a,b,12\nb,c,0\na,c,1\nc,d,15\n", false, false, &data));
  CHECK(nr_model_new("{\"data\":\"poisson\"}", data, &model));
  if (nr_model_param_count(model) != 3 || strcmp(nr_model_param_name(model, 2), "rho") != 0) {
    return 2;
  }
  double theta[3] = {5.0, 1.0, 0.3};
  double q[2];
  if (nr_edge_posterior(model, data, theta, 3, 0, 1, q, 2) != NR_STATUS_DOMAIN) {
    return 3;
  }
  if (strlen(nr_last_error_message()) == 0) {
    return 4;
  }
  CHECK(nr_sample(model, data, "{\"chains\":2,\"warmup\":100,\"samples\":100}", &draws));
  double probs[12];
  CHECK(nr_edge_probabilities(model, data, draws, probs, 12));
  for (int r = 0; r < 6; r++) {
    if (fabs(probs[2 * r] + probs[2 * r + 1] - 1.0) > 1e-12) {
      return 5;
    }
  }
  printf("p(a-b) = %.4f\n", probs[1]);
  nr_draws_free(draws);
  nr_model_free(model);
  nr_data_free(data);
  return 0;
}
