import pytest

from bfcprov.catalog import make_bfc_request
from bfcprov.chainstate import ProvisioningState
from bfcprov.harness.scenarios import builtin_scenario


@pytest.fixture(scope="session")
def ehr():
    return builtin_scenario("ehr")


@pytest.fixture(scope="session")
def streaming():
    return builtin_scenario("streaming")


@pytest.fixture(scope="session")
def mlshare():
    return builtin_scenario("ml-share")


@pytest.fixture
def state():
    return ProvisioningState()


@pytest.fixture
def ehr_request(ehr):
    def make(clients=1, request_id=0):
        return make_bfc_request(ehr.use_case, ehr.chain, clients, request_id=request_id,
                                ingress=ehr.ingress, egress=ehr.egress)
    return make
